//! Experience database with behaviour-policy snapshots and truncated
//! importance weights.
//!
//! The database is a FIFO ring buffer. Sampling is uniform with replacement
//! over the current contents. Only the action density is re-weighted; the
//! state distribution of the database is used as is.

use std::collections::VecDeque;
use std::io::{Read, Write};

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::policy::{PolicySnapshot, ReparamGaussianPolicy};
use crate::Vector;

pub const DEFAULT_CAPACITY: usize = 1_000_000;
/// Importance-weight truncation used unless configured otherwise.
pub const DEFAULT_MAX_WEIGHT: f64 = 5.0;

const DB_MAGIC: &[u8; 4] = b"SVGD";
const DB_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub s: Vector,
    /// The action as emitted by the policy, before any clipping.
    pub a: Vector,
    pub r: f64,
    pub s_next: Vector,
    pub terminal: bool,
    pub t: usize,
    pub behavior: PolicySnapshot,
    pub episode_id: u64,
}

impl Transition {
    pub fn validate(&self) -> Result<()> {
        check_dim("Transition s_next", self.s.len(), self.s_next.len())?;
        check_dim("Transition behavior mean", self.a.len(), self.behavior.mean.len())?;
        check_dim("Transition behavior std", self.a.len(), self.behavior.std.len())?;
        let finite = self.s.iter().chain(self.a.iter()).chain(self.s_next.iter()).all(|v| v.is_finite())
            && self.r.is_finite()
            && self.behavior.mean.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("transition".into()));
        }
        if self.behavior.std.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::NonFinite("transition behavior std".into()));
        }
        Ok(())
    }
}

/// What follows a sampled transition, for action-value targets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Successor<'a> {
    /// The next transition of the same episode exists; its action.
    Action(&'a Vector),
    /// The transition ended its episode.
    Terminal,
    /// The episode continues but its next transition is not in the database
    /// (evicted, or not yet inserted).
    Boundary,
}

#[derive(Clone, Copy, Debug)]
pub struct Sample<'a> {
    pub transition: &'a Transition,
    pub successor: Successor<'a>,
}

#[derive(Clone, Debug)]
pub struct ExperienceDatabase {
    buffer: VecDeque<Transition>,
    capacity: usize,
    inserted: u64,
}

impl Default for ExperienceDatabase {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY)
    }
}

impl ExperienceDatabase {
    pub fn new(capacity: usize) -> Self {
        ExperienceDatabase {
            buffer: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity: capacity.max(1),
            inserted: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total number of insertions, including evicted transitions.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.buffer.get(index)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.buffer.iter()
    }

    pub fn insert(&mut self, tr: Transition) -> Result<()> {
        tr.validate()?;
        if let Some(first) = self.buffer.front() {
            check_dim("insert state", first.s.len(), tr.s.len())?;
            check_dim("insert action", first.a.len(), tr.a.len())?;
        }
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(tr);
        self.inserted += 1;
        Ok(())
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        if self.is_empty() {
            return Err(Error::EmptyDatabase);
        }
        Ok((0..n).map(|_| &self.buffer[rng.random_range(0..self.len())]).collect())
    }

    /// Uniform sample with replacement, pairing each transition with its successor.
    pub fn sample_with_successor<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Sample<'_>>> {
        if self.is_empty() {
            return Err(Error::EmptyDatabase);
        }
        Ok((0..n)
            .map(|_| {
                let i = rng.random_range(0..self.len());
                Sample {
                    transition: &self.buffer[i],
                    successor: self.successor(i),
                }
            })
            .collect())
    }

    pub fn successor(&self, index: usize) -> Successor<'_> {
        let tr = &self.buffer[index];
        if tr.terminal {
            return Successor::Terminal;
        }
        match self.buffer.get(index + 1) {
            Some(next) if next.episode_id == tr.episode_id && next.t == tr.t + 1 => Successor::Action(&next.a),
            _ => Successor::Boundary,
        }
    }

    /// Writes the contents in insertion order: header `SVGD`, version,
    /// capacity, count, then one length-prefixed record per transition.
    pub fn dump<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(DB_MAGIC)?;
        w.write_all(&DB_VERSION.to_le_bytes())?;
        w.write_all(&(self.capacity as u64).to_le_bytes())?;
        w.write_all(&self.inserted.to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for tr in &self.buffer {
            let rec = encode(tr);
            w.write_all(&(rec.len() as u32).to_le_bytes())?;
            w.write_all(&rec)?;
        }
        Ok(())
    }

    pub fn load<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != DB_MAGIC {
            return Err(Error::Format(format!("bad database magic {magic:?}")));
        }
        let version = read_u32(r)?;
        if version != DB_VERSION {
            return Err(Error::Format(format!("unsupported database version {version}")));
        }
        let capacity = read_u64(r)? as usize;
        let inserted = read_u64(r)?;
        let count = read_u64(r)? as usize;
        let mut db = ExperienceDatabase::new(capacity);
        for _ in 0..count {
            let len = read_u32(r)? as usize;
            let mut rec = vec![0u8; len];
            r.read_exact(&mut rec)?;
            db.insert(decode(&rec)?)?;
        }
        db.inserted = inserted;
        Ok(db)
    }
}

fn encode(tr: &Transition) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(tr.s.len() as u32).to_le_bytes());
    out.extend_from_slice(&(tr.a.len() as u32).to_le_bytes());
    let mut put = |v: f64| out.extend_from_slice(&v.to_le_bytes());
    tr.s.iter().for_each(|v| put(*v));
    tr.a.iter().for_each(|v| put(*v));
    put(tr.r);
    tr.s_next.iter().for_each(|v| put(*v));
    tr.behavior.mean.iter().for_each(|v| put(*v));
    tr.behavior.std.iter().for_each(|v| put(*v));
    out.push(tr.terminal as u8);
    out.extend_from_slice(&(tr.t as u64).to_le_bytes());
    out.extend_from_slice(&tr.episode_id.to_le_bytes());
    out
}

fn decode(mut rec: &[u8]) -> Result<Transition> {
    let r = &mut rec;
    let ns = read_u32(r)? as usize;
    let na = read_u32(r)? as usize;
    let mut vec = |n: usize| -> Result<Vector> {
        let mut v = Vector::zeros(n);
        for x in v.iter_mut() {
            *x = read_f64(r)?;
        }
        Ok(v)
    };
    let s = vec(ns)?;
    let a = vec(na)?;
    let reward = vec(1)?[0];
    let s_next = vec(ns)?;
    let mean = vec(na)?;
    let std = vec(na)?;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let t = read_u64(r)? as usize;
    let episode_id = read_u64(r)?;
    if !r.is_empty() {
        return Err(Error::Format("trailing bytes in transition record".into()));
    }
    Ok(Transition {
        s,
        a,
        r: reward,
        s_next,
        terminal: flag[0] != 0,
        t,
        behavior: PolicySnapshot::new(mean, std)?,
        episode_id,
    })
}

fn read_u32<R: Read + ?Sized>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read + ?Sized>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read + ?Sized>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

/// `min(w_max, pi_current(a|s) / pi_behavior(a|s))`.
pub fn importance_weight(policy: &ReparamGaussianPolicy, tr: &Transition, w_max: f64) -> Result<f64> {
    if !(w_max > 0.0) {
        return Err(Error::InvalidConfig(format!("w_max must be > 0, got {w_max}")));
    }
    let current = policy.log_density_at(&tr.s, &tr.a)?;
    let behavior = tr.behavior.log_density(&tr.a);
    let w = (current - behavior).exp();
    if w.is_nan() {
        return Err(Error::NonFinite("importance weight".into()));
    }
    Ok(w.min(w_max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use nalgebra::dvector;

    fn transition(i: u64, episode: u64, t: usize, terminal: bool) -> Transition {
        Transition {
            s: dvector![i as f64, 1.0],
            a: dvector![0.5 * i as f64],
            r: -(i as f64),
            s_next: dvector![i as f64 + 1.0, 1.0],
            terminal,
            t,
            behavior: PolicySnapshot::new(dvector![0.1], dvector![0.7]).unwrap(),
            episode_id: episode,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut db = ExperienceDatabase::new(2);
        db.insert(transition(0, 0, 0, false)).unwrap();
        assert_eq!(db.len(), 1);
        db.insert(transition(1, 0, 1, false)).unwrap();
        db.insert(transition(2, 0, 2, false)).unwrap();
        assert_eq!(db.len(), 2);
        assert_eq!(db.get(0).unwrap().s[0], 1.0);
        assert_eq!(db.inserted(), 3);
    }

    #[test]
    fn rejects_bad_transitions() {
        let mut db = ExperienceDatabase::new(10);
        let mut tr = transition(0, 0, 0, false);
        tr.r = f64::NAN;
        assert!(db.insert(tr).is_err());
        let mut tr = transition(0, 0, 0, false);
        tr.behavior.std[0] = 0.0;
        assert!(db.insert(tr).is_err());
        assert!(db.sample(1, &mut stream(0, Stream::Replay)).is_err());
    }

    #[test]
    fn sampling_is_seeded() {
        let mut db = ExperienceDatabase::new(100);
        db.insert(transition(7, 0, 0, true)).unwrap();
        let one = db.sample(20, &mut stream(1, Stream::Replay)).unwrap();
        assert!(one.iter().all(|tr| tr.s[0] == 7.0));
        for i in 0..50 {
            db.insert(transition(i, i / 10, (i % 10) as usize, i % 10 == 9)).unwrap();
        }
        let a: Vec<f64> = db.sample(30, &mut stream(2, Stream::Replay)).unwrap().iter().map(|t| t.s[0]).collect();
        let b: Vec<f64> = db.sample(30, &mut stream(2, Stream::Replay)).unwrap().iter().map(|t| t.s[0]).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn successors_stay_within_episodes() {
        let mut db = ExperienceDatabase::new(57);
        let mut id = 0;
        for ep in 0..30u64 {
            let len = 1 + (ep as usize * 7) % 9;
            for t in 0..len {
                db.insert(transition(id, ep, t, t + 1 == len && ep % 2 == 0)).unwrap();
                id += 1;
            }
        }
        let samples = db.sample_with_successor(10_000, &mut stream(3, Stream::Replay)).unwrap();
        for smp in samples {
            let tr = smp.transition;
            match smp.successor {
                Successor::Action(a) => {
                    let next = db.iter().find(|x| x.a == *a && x.episode_id == tr.episode_id).unwrap();
                    assert_eq!(next.t, tr.t + 1);
                    assert!(!tr.terminal);
                }
                Successor::Terminal => assert!(tr.terminal),
                Successor::Boundary => assert!(!tr.terminal),
            }
        }
    }

    #[test]
    fn dump_load_round_trip() {
        let mut db = ExperienceDatabase::new(5);
        for i in 0..8 {
            db.insert(transition(i, i / 3, (i % 3) as usize, i % 3 == 2)).unwrap();
        }
        let mut buf = Vec::new();
        db.dump(&mut buf).unwrap();
        let back = ExperienceDatabase::load(&mut buf.as_slice()).unwrap();
        assert_eq!(back.len(), 5);
        assert_eq!(back.capacity(), 5);
        assert_eq!(back.inserted(), 8);
        assert!(back.iter().zip(db.iter()).all(|(x, y)| x == y));
        buf[0] = b'X';
        assert!(ExperienceDatabase::load(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn weights() {
        let gain = crate::Matrix::from_row_slice(1, 2, &[0.3, -0.2]);
        let policy = ReparamGaussianPolicy::linear(&gain, &dvector![0.7]).unwrap();
        let s = dvector![1.0, 2.0];
        let snap = policy.snapshot(&s).unwrap();
        let mut tr = transition(0, 0, 0, false);
        tr.s = s.clone();
        tr.behavior = snap.clone();
        tr.a = dvector![0.9];
        assert!((importance_weight(&policy, &tr, 5.0).unwrap() - 1.0).abs() <= 1e-10);

        tr.behavior = PolicySnapshot::new(dvector![40.0], dvector![0.7]).unwrap();
        tr.a = snap.mean.clone();
        assert_eq!(importance_weight(&policy, &tr, 5.0).unwrap(), 5.0);

        let mut rng = stream(4, Stream::Replay);
        for _ in 0..100 {
            let mean = dvector![rng.random_range(-1.0..1.0)];
            let std = dvector![rng.random_range(0.3..2.0)];
            tr.behavior = PolicySnapshot::new(mean.clone(), std.clone()).unwrap();
            tr.a = dvector![rng.random_range(-2.0..2.0)];
            let direct = (-(tr.a[0] - snap.mean[0]).powi(2) / (2.0 * 0.49)).exp() / 0.7
                / ((-(tr.a[0] - mean[0]).powi(2) / (2.0 * std[0] * std[0])).exp() / std[0]);
            let w = importance_weight(&policy, &tr, 1e9).unwrap();
            assert!((w - direct).abs() <= 1e-10 * direct.max(1.0));
            assert!(w > 0.0);
        }
        assert!(importance_weight(&policy, &tr, 0.0).is_err());
    }
}
