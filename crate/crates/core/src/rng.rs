//! Seeded random streams.
//!
//! Every component draws from its own ChaCha stream derived from the master
//! seed and a fixed label, so changing how much randomness one component
//! consumes never shifts the draws of another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::Vector;

pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Env = 2,
    PolicyNoise = 3,
    Replay = 4,
    Eval = 5,
    Model = 6,
    Planner = 7,
}

/// Returns the random stream for `label` under `seed`.
pub fn stream(seed: u64, label: Stream) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label as u64);
    rng
}

/// Same as [`stream`] with an extra sub-index, for per-episode or per-rollout streams.
pub fn substream(seed: u64, label: Stream, index: u64) -> StreamRng {
    let mixed = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    let mut rng = ChaCha8Rng::seed_from_u64(mixed ^ index);
    rng.set_stream(label as u64);
    rng
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vector {
    Vector::from_fn(dim, |_, _| rng.sample(StandardNormal))
}
