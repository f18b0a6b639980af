//! Learned stochastic dynamics `s' = s + mu(s, a) + sigma * xi`.
//!
//! Each state dimension has its own subnetwork on the concatenated `(s, a)`
//! predicting that dimension's change. The noise scale `sigma` is a learned
//! per-dimension constant. Inputs and outputs of the subnetworks are
//! standardized with statistics of the experience database; refitting the
//! standardization never changes the function the model computes.

use std::io::{BufRead, Write};

use rand::Rng;

use crate::diffcore::{Affine, DiffNetwork, Direction, Manifest, Optimizer, ParamVector, ScaledNetwork};
use crate::error::{check_dim, Error, Result};
use crate::replay::{ExperienceDatabase, Transition};
use crate::{Matrix, Vector};

const CHECKPOINT_KIND: &str = "svgrad-model";
const CHECKPOINT_VERSION: u32 = 1;
const INPUT_MIN_SCALE: f64 = 1e-3;
const OUTPUT_MIN_SCALE: f64 = 1e-6;
/// Lower bound on `sigma_i` relative to the spread of the observed changes.
const NOISE_FLOOR: f64 = 1e-3;
/// Transitions used to measure the likelihood before and after training.
const EVAL_SAMPLES: usize = 1024;

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsModel {
    subnets: Vec<ScaledNetwork>,
    log_noise: Vector,
    state_dim: usize,
    action_dim: usize,
    fitted: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelTrainReport {
    pub batches: usize,
    /// Mean negative log likelihood of the evaluation sample before training.
    pub nll_before: f64,
    pub nll_after: f64,
    /// Per-dimension mean squared error of the mean prediction after training.
    pub mse_per_dim: Vec<f64>,
    /// Mean negative log likelihood of each training batch before its update.
    pub batch_nll: Vec<f64>,
    /// Set when training stopped on a non-finite loss; parameters were rolled back.
    pub aborted: Option<String>,
}

impl DynamicsModel {
    /// Model whose subnetworks are all zero: the identity map plus unit noise.
    pub fn zeros(state_dim: usize, action_dim: usize, hidden: &[usize]) -> Result<Self> {
        let sizes = subnet_sizes(state_dim, action_dim, hidden);
        let subnets = (0..state_dim)
            .map(|_| ScaledNetwork::zeros(&sizes))
            .collect::<Result<Vec<_>>>()?;
        Ok(DynamicsModel {
            subnets,
            log_noise: Vector::zeros(state_dim),
            state_dim,
            action_dim,
            fitted: false,
        })
    }

    /// Random hidden layers and a zero output layer, so the initial mean
    /// prediction is the identity but every layer receives gradient.
    pub fn random<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut model = Self::zeros(state_dim, action_dim, hidden)?;
        let sizes = subnet_sizes(state_dim, action_dim, hidden);
        for net in &mut model.subnets {
            let mut inner = DiffNetwork::random(&sizes, rng)?;
            let last = inner.num_layers() - 1;
            inner.weights_mut(last).fill(0.0);
            inner.bias_mut(last).fill(0.0);
            *net = ScaledNetwork::unscaled(inner);
        }
        Ok(model)
    }

    /// Exact linear-Gaussian model `s' = A s + B a + noise_std * xi` (no hidden layers).
    pub fn from_linear(a: &Matrix, b: &Matrix, noise_std: &Vector) -> Result<Self> {
        let n = a.nrows();
        check_dim("from_linear A", n, a.ncols())?;
        check_dim("from_linear B", n, b.nrows())?;
        check_dim("from_linear noise", n, noise_std.len())?;
        let m = b.ncols();
        let mut model = Self::zeros(n, m, &[])?;
        for i in 0..n {
            let mut w = Matrix::zeros(1, n + m);
            for j in 0..n {
                w[(0, j)] = a[(i, j)] - if i == j { 1.0 } else { 0.0 };
            }
            for j in 0..m {
                w[(0, n + j)] = b[(i, j)];
            }
            model.subnets[i] = ScaledNetwork::unscaled(DiffNetwork::from_layers(vec![w], vec![Vector::zeros(1)])?);
        }
        model.log_noise = noise_std.map(f64::ln);
        model.fitted = true;
        Ok(model)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        let sizes = self.subnets[0].net().layer_sizes();
        sizes[1..sizes.len() - 1].to_vec()
    }

    pub fn log_noise(&self) -> &Vector {
        &self.log_noise
    }

    pub fn noise_std(&self) -> Vector {
        self.log_noise.map(f64::exp)
    }

    pub fn subnets(&self) -> &[ScaledNetwork] {
        &self.subnets
    }

    pub fn num_params(&self) -> usize {
        self.subnets.iter().map(|n| n.num_params()).sum::<usize>() + self.state_dim
    }

    /// Subnetwork parameters in dimension order, then `log_noise`.
    pub fn params(&self) -> ParamVector {
        let mut v = Vec::with_capacity(self.num_params());
        for net in &self.subnets {
            v.extend(net.params().into_vec());
        }
        v.extend(self.log_noise.iter());
        ParamVector::from_vec(v)
    }

    pub fn set_params(&mut self, p: &ParamVector) -> Result<()> {
        check_dim("DynamicsModel::set_params", self.num_params(), p.len())?;
        let mut off = 0;
        for net in &mut self.subnets {
            let n = net.num_params();
            net.set_params(&ParamVector::from_vec(p.as_slice()[off..off + n].to_vec()))?;
            off += n;
        }
        self.log_noise = Vector::from_column_slice(&p.as_slice()[off..]);
        Ok(())
    }

    fn input(&self, s: &Vector, a: &Vector) -> Result<Vector> {
        check_dim("model state", self.state_dim, s.len())?;
        check_dim("model action", self.action_dim, a.len())?;
        let mut x = Vector::zeros(self.state_dim + self.action_dim);
        x.rows_mut(0, self.state_dim).copy_from(s);
        x.rows_mut(self.state_dim, self.action_dim).copy_from(a);
        Ok(x)
    }

    /// Predicted mean change `mu(s, a)`.
    pub fn predict_change(&self, s: &Vector, a: &Vector) -> Result<Vector> {
        let x = self.input(s, a)?;
        let mut out = Vector::zeros(self.state_dim);
        for (i, net) in self.subnets.iter().enumerate() {
            out[i] = net.forward(&x)?[0];
        }
        Ok(out)
    }

    pub fn predict_mean(&self, s: &Vector, a: &Vector) -> Result<Vector> {
        Ok(s + self.predict_change(s, a)?)
    }

    pub fn predict(&self, s: &Vector, a: &Vector, xi: &Vector) -> Result<Vector> {
        check_dim("model noise", self.state_dim, xi.len())?;
        Ok(self.predict_mean(s, a)? + self.noise_std().component_mul(xi))
    }

    /// The noise that makes [`predict`](Self::predict) produce `s_next`.
    pub fn infer_noise(&self, s: &Vector, a: &Vector, s_next: &Vector) -> Result<Vector> {
        check_dim("model next state", self.state_dim, s_next.len())?;
        Ok((s_next - self.predict_mean(s, a)?).component_div(&self.noise_std()))
    }

    /// `(f_s, f_a)` of the prediction; independent of the noise.
    pub fn jacobians(&self, s: &Vector, a: &Vector) -> Result<(Matrix, Matrix)> {
        let x = self.input(s, a)?;
        let (n, m) = (self.state_dim, self.action_dim);
        let mut f_s = Matrix::identity(n, n);
        let mut f_a = Matrix::zeros(n, m);
        for (i, net) in self.subnets.iter().enumerate() {
            let row = net.input_jacobian(&x)?;
            for j in 0..n {
                f_s[(i, j)] += row[(0, j)];
            }
            for j in 0..m {
                f_a[(i, j)] = row[(0, n + j)];
            }
        }
        Ok((f_s, f_a))
    }

    /// Negative log likelihood of one observed transition.
    pub fn nll(&self, s: &Vector, a: &Vector, s_next: &Vector) -> Result<f64> {
        let r = s_next - self.predict_mean(s, a)?;
        Ok(gaussian_nll(&r, &self.log_noise))
    }

    pub fn mean_nll<'a>(&self, transitions: impl IntoIterator<Item = &'a Transition>) -> Result<f64> {
        let mut total = 0.0;
        let mut n = 0usize;
        for tr in transitions {
            total += self.nll(&tr.s, &tr.a, &tr.s_next)?;
            n += 1;
        }
        Ok(if n == 0 { 0.0 } else { total / n as f64 })
    }

    /// Per-dimension mean squared error of the mean prediction.
    pub fn mse_per_dim<'a>(&self, transitions: impl IntoIterator<Item = &'a Transition>) -> Result<Vec<f64>> {
        let mut acc = Vector::zeros(self.state_dim);
        let mut n = 0usize;
        for tr in transitions {
            let r = &tr.s_next - self.predict_mean(&tr.s, &tr.a)?;
            acc += r.component_mul(&r);
            n += 1;
        }
        Ok(acc.iter().map(|v| v / n.max(1) as f64).collect())
    }

    /// Refits the input and output standardization to the database contents.
    ///
    /// The first refit also sets `sigma` to the spread of the observed changes.
    pub fn refit_standardization(&mut self, db: &ExperienceDatabase) -> Result<()> {
        if db.is_empty() {
            return Err(Error::EmptyDatabase);
        }
        let inputs: Vec<Vector> = db.iter().map(|tr| self.input(&tr.s, &tr.a)).collect::<Result<_>>()?;
        let input = Affine::from_samples(self.state_dim + self.action_dim, inputs.iter(), INPUT_MIN_SCALE)?;
        let changes: Vec<Vector> = db.iter().map(|tr| &tr.s_next - &tr.s).collect();
        let output = Affine::from_samples(self.state_dim, changes.iter(), OUTPUT_MIN_SCALE)?;
        for (i, net) in self.subnets.iter_mut().enumerate() {
            net.refit_input(input.clone())?;
            let out = Affine::new(Vector::from_element(1, output.shift[i]), Vector::from_element(1, output.scale[i]))?;
            net.refit_output(out)?;
        }
        if !self.fitted {
            self.log_noise = output.scale.map(f64::ln);
            self.fitted = true;
        }
        Ok(())
    }

    fn noise_floor(&self) -> Vector {
        Vector::from_iterator(
            self.state_dim,
            self.subnets
                .iter()
                .map(|net| (NOISE_FLOOR * net.output_affine().scale[0]).max(1e-12).ln()),
        )
    }

    /// Gradient of the batch loss and the batch mean negative log likelihood.
    ///
    /// `log_noise` follows the exact likelihood gradient. Each mean
    /// subnetwork follows the likelihood gradient multiplied by
    /// `sigma_i^2 / scale_i^2`, which is the gradient of the standardized
    /// squared error: because `sigma_i` is constant across samples it has
    /// the same minimizer, without the `1 / sigma_i^2` stiffness.
    fn batch_gradient(&self, batch: &[&Transition]) -> Result<(ParamVector, f64)> {
        let mut grad = vec![0.0; self.num_params()];
        let sigma = self.noise_std();
        let mut nll = 0.0;
        let w = 1.0 / batch.len() as f64;
        let noise_off = self.num_params() - self.state_dim;
        for tr in batch {
            let x = self.input(&tr.s, &tr.a)?;
            let mut off = 0;
            let mut resid = Vector::zeros(self.state_dim);
            for (i, net) in self.subnets.iter().enumerate() {
                let np = net.num_params();
                let tape = net.tape(&x)?;
                let r = tr.s_next[i] - tr.s[i] - net.tape_output(&tape)[0];
                resid[i] = r;
                let scale = net.output_affine().scale[0];
                let cot = Vector::from_element(1, -r / (scale * scale));
                net.backward(&tape, &cot, Some((&mut grad[off..off + np], w)))?;
                off += np;
            }
            for i in 0..self.state_dim {
                let z = resid[i] / sigma[i];
                grad[noise_off + i] += w * (1.0 - z * z);
            }
            nll += w * gaussian_nll(&resid, &self.log_noise);
        }
        Ok((ParamVector::from_vec(grad), nll))
    }

    /// Trains on `batches` uniformly sampled batches of `batch_size` transitions.
    pub fn train<R: Rng + ?Sized>(
        &mut self,
        db: &ExperienceDatabase,
        batches: usize,
        batch_size: usize,
        opt: &mut Optimizer,
        rng: &mut R,
    ) -> Result<ModelTrainReport> {
        if db.is_empty() {
            return Err(Error::EmptyDatabase);
        }
        let eval_n = db.len().min(EVAL_SAMPLES);
        let eval: Vec<&Transition> = if db.len() <= EVAL_SAMPLES {
            db.iter().collect()
        } else {
            db.sample(eval_n, rng)?
        };
        if batches == 0 || batch_size == 0 {
            let nll = self.mean_nll(eval.iter().copied())?;
            return Ok(ModelTrainReport {
                batches: 0,
                nll_before: nll,
                nll_after: nll,
                mse_per_dim: self.mse_per_dim(eval.iter().copied())?,
                batch_nll: Vec::new(),
                aborted: None,
            });
        }
        let backup = self.clone();
        self.refit_standardization(db)?;
        let mut report = ModelTrainReport {
            nll_before: self.mean_nll(eval.iter().copied())?,
            ..Default::default()
        };
        let floor = self.noise_floor();
        let mut params = self.params();
        for _ in 0..batches {
            let batch = db.sample(batch_size, rng)?;
            let (grad, nll) = self.batch_gradient(&batch)?;
            if !nll.is_finite() || !grad.is_finite() {
                *self = backup;
                report.aborted = Some(format!("non-finite model loss after {} batches", report.batches));
                report.nll_after = report.nll_before;
                return Ok(report);
            }
            report.batch_nll.push(nll);
            opt.apply(&mut params, &grad, Direction::Descent)?;
            let n = params.len();
            for i in 0..self.state_dim {
                let v = &mut params.as_mut_slice()[n - self.state_dim + i];
                *v = v.max(floor[i]);
            }
            self.set_params(&params)?;
            report.batches += 1;
        }
        report.nll_after = self.mean_nll(eval.iter().copied())?;
        report.mse_per_dim = self.mse_per_dim(eval.iter().copied())?;
        if !report.nll_after.is_finite() {
            *self = backup;
            report.aborted = Some("non-finite model likelihood after training".into());
        }
        Ok(report)
    }

    pub fn write_checkpoint<W: Write>(&self, w: &mut W) -> Result<()> {
        let mut m = Manifest::new();
        m.push("state_dim", [self.state_dim]);
        m.push("action_dim", [self.action_dim]);
        m.push("subnet_layers", self.subnets[0].net().layer_sizes().iter());
        m.push("fitted", [self.fitted as u8]);
        m.push_vector("input_shift", &self.subnets[0].input_affine().shift);
        m.push_vector("input_scale", &self.subnets[0].input_affine().scale);
        let shifts = Vector::from_iterator(self.state_dim, self.subnets.iter().map(|n| n.output_affine().shift[0]));
        let scales = Vector::from_iterator(self.state_dim, self.subnets.iter().map(|n| n.output_affine().scale[0]));
        m.push_vector("output_shift", &shifts);
        m.push_vector("output_scale", &scales);
        m.write_to(w, CHECKPOINT_KIND, CHECKPOINT_VERSION)?;
        for net in &self.subnets {
            net.params().write_to(w)?;
        }
        ParamVector::from_vec(self.log_noise.as_slice().to_vec()).write_to(w)
    }

    pub fn read_checkpoint<R: BufRead>(r: &mut R) -> Result<Self> {
        let m = Manifest::read_from(r, CHECKPOINT_KIND, CHECKPOINT_VERSION)?;
        let n = m.usize("state_dim")?;
        let act = m.usize("action_dim")?;
        let layers = m.usizes("subnet_layers")?;
        if layers.len() < 2 || layers[0] != n + act || layers[layers.len() - 1] != 1 {
            return Err(Error::Format(format!("bad model subnet layers {layers:?}")));
        }
        let input = Affine::new(m.vector("input_shift")?, m.vector("input_scale")?)?;
        let shifts = m.vector("output_shift")?;
        let scales = m.vector("output_scale")?;
        check_dim("model checkpoint output_shift", n, shifts.len())?;
        check_dim("model checkpoint output_scale", n, scales.len())?;
        let mut subnets = Vec::with_capacity(n);
        for i in 0..n {
            let net = DiffNetwork::from_params(&layers, &ParamVector::read_from(r)?)?;
            let out = Affine::new(Vector::from_element(1, shifts[i]), Vector::from_element(1, scales[i]))?;
            subnets.push(ScaledNetwork::new(net, input.clone(), out)?);
        }
        let log_noise = Vector::from_vec(ParamVector::read_from(r)?.into_vec());
        check_dim("model checkpoint log_noise", n, log_noise.len())?;
        Ok(DynamicsModel {
            subnets,
            log_noise,
            state_dim: n,
            action_dim: act,
            fitted: m.usize("fitted")? != 0,
        })
    }
}

fn subnet_sizes(state_dim: usize, action_dim: usize, hidden: &[usize]) -> Vec<usize> {
    let mut sizes = vec![state_dim + action_dim];
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    sizes
}

fn gaussian_nll(resid: &Vector, log_noise: &Vector) -> f64 {
    let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let mut out = 0.0;
    for i in 0..resid.len() {
        let z = resid[i] * (-log_noise[i]).exp();
        out += 0.5 * z * z + log_noise[i] + half_log_2pi;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{central_difference, relative_error, FD_STEP};
    use crate::envs::{Environment, Lqg, LqgParams};
    use crate::policy::PolicySnapshot;
    use crate::rng::{standard_normal, stream, Stream};
    use nalgebra::dvector;

    fn lqg_database(n: usize, seed: u64) -> (Lqg, ExperienceDatabase) {
        let env = Lqg::new(LqgParams::default()).unwrap();
        let mut rng = stream(seed, Stream::Env);
        let mut db = ExperienceDatabase::new(n);
        let mut state = env.reset(&mut rng);
        for i in 0..n {
            let a = standard_normal(&mut rng, 1);
            let step = env.step(&state, &a, &mut rng).unwrap();
            db.insert(Transition {
                s: state.s.clone(),
                a,
                r: step.reward,
                s_next: step.next_state.clone(),
                terminal: false,
                t: state.t,
                behavior: PolicySnapshot::new(dvector![0.0], dvector![1.0]).unwrap(),
                episode_id: (i / 50) as u64,
            })
            .unwrap();
            state = if (i + 1) % 50 == 0 { env.reset(&mut rng) } else { crate::envs::EnvState::new(step.next_state, state.t + 1) };
        }
        (env, db)
    }

    fn random_model(seed: u64) -> DynamicsModel {
        let mut rng = stream(seed, Stream::Init);
        let mut m = DynamicsModel::random(3, 2, &[5, 4], &mut rng).unwrap();
        let p = standard_normal(&mut rng, m.num_params());
        m.set_params(&ParamVector::from_vec(p.map(|v| 0.5 * v).as_slice().to_vec())).unwrap();
        m
    }

    #[test]
    fn zero_model_is_identity() {
        let m = DynamicsModel::zeros(3, 2, &[4, 4]).unwrap();
        let s = dvector![1.0, -2.0, 0.5];
        let a = dvector![0.3, 0.1];
        assert_eq!(m.predict(&s, &a, &Vector::zeros(3)).unwrap(), s);
        let (f_s, f_a) = m.jacobians(&s, &a).unwrap();
        assert_eq!(f_s, Matrix::identity(3, 3));
        assert_eq!(f_a, Matrix::zeros(3, 2));
    }

    #[test]
    fn predict_and_infer_are_inverse() {
        let m = random_model(1);
        let mut rng = stream(1, Stream::Model);
        for _ in 0..200 {
            let s = standard_normal(&mut rng, 3);
            let a = standard_normal(&mut rng, 2);
            let xi = standard_normal(&mut rng, 3);
            let next = m.predict(&s, &a, &xi).unwrap();
            assert!((m.infer_noise(&s, &a, &next).unwrap() - &xi).amax() < 1e-12);
            assert!((m.predict(&s, &a, &m.infer_noise(&s, &a, &next).unwrap()).unwrap() - &next).amax() < 1e-12);
            let mean = m.predict_mean(&s, &a).unwrap();
            assert!(m.infer_noise(&s, &a, &mean).unwrap().amax() < 1e-15);
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let m = random_model(2);
        let mut rng = stream(2, Stream::Model);
        for _ in 0..100 {
            let s = standard_normal(&mut rng, 3);
            let a = standard_normal(&mut rng, 2);
            let (f_s, f_a) = m.jacobians(&s, &a).unwrap();
            for i in 0..3 {
                let fs = |p: &ParamVector| m.predict_mean(&Vector::from_column_slice(p.as_slice()), &a).unwrap()[i];
                let num = central_difference(fs, &ParamVector::from_vec(s.as_slice().to_vec()), FD_STEP);
                let row = ParamVector::from_vec(f_s.row(i).iter().copied().collect());
                assert!(relative_error(&row, &num) <= 1e-5);
                let fa = |p: &ParamVector| m.predict_mean(&s, &Vector::from_column_slice(p.as_slice())).unwrap()[i];
                let num = central_difference(fa, &ParamVector::from_vec(a.as_slice().to_vec()), FD_STEP);
                let row = ParamVector::from_vec(f_a.row(i).iter().copied().collect());
                assert!(relative_error(&row, &num) <= 1e-5);
            }
        }
    }

    #[test]
    fn zero_batches_leave_model_unchanged() {
        let (_, db) = lqg_database(200, 3);
        let mut m = DynamicsModel::random(2, 1, &[8], &mut stream(3, Stream::Init)).unwrap();
        let before = m.clone();
        let mut opt = Optimizer::rmsprop(1e-3, 0.9, 1e-8).unwrap();
        let rep = m.train(&db, 0, 32, &mut opt, &mut stream(3, Stream::Model)).unwrap();
        assert_eq!(m, before);
        assert_eq!(rep.nll_before, rep.nll_after);
        assert!(m.train(&ExperienceDatabase::new(4), 1, 1, &mut opt, &mut stream(3, Stream::Model)).is_err());
    }

    #[test]
    fn refit_preserves_predictions() {
        let (_, db) = lqg_database(300, 4);
        let mut m = random_model_for(2, 1, 4);
        let s = dvector![0.3, -0.7];
        let a = dvector![1.1];
        let before = m.predict_mean(&s, &a).unwrap();
        m.fitted = true;
        m.refit_standardization(&db).unwrap();
        assert!((m.predict_mean(&s, &a).unwrap() - before).amax() < 1e-12);
    }

    fn random_model_for(n: usize, act: usize, seed: u64) -> DynamicsModel {
        let mut rng = stream(seed, Stream::Init);
        let mut m = DynamicsModel::random(n, act, &[6, 6], &mut rng).unwrap();
        let p = standard_normal(&mut rng, m.num_params());
        m.set_params(&ParamVector::from_vec(p.map(|v| 0.3 * v).as_slice().to_vec())).unwrap();
        m
    }

    #[test]
    fn learns_lqg_dynamics() {
        let (env, db) = lqg_database(100_000, 5);
        let mut m = DynamicsModel::random(2, 1, &[20, 20], &mut stream(5, Stream::Init)).unwrap();
        let mut opt = Optimizer::rmsprop(1e-3, 0.9, 1e-8).unwrap();
        let mut rng = stream(5, Stream::Model);
        let mut batch_nll = Vec::new();
        for round in 0..20 {
            if round == 10 {
                opt = Optimizer::rmsprop(1e-4, 0.9, 1e-8).unwrap();
            }
            let batch = if round < 10 { 64 } else { 256 };
            let rep = m.train(&db, 500, batch, &mut opt, &mut rng).unwrap();
            assert!(rep.aborted.is_none());
            batch_nll.extend(rep.batch_nll);
        }
        let first: f64 = batch_nll[..10].iter().sum::<f64>() / 10.0;
        let last: f64 = batch_nll[batch_nll.len() - 10..].iter().sum::<f64>() / 10.0;
        assert!(last < first, "{first} -> {last}");

        let sigma = env.params().noise_std;
        let learned = m.noise_std();
        for i in 0..2 {
            assert!((learned[i] / sigma - 1.0).abs() < 0.1, "sigma {i}: {}", learned[i]);
        }
        let mse = m.mse_per_dim(db.iter()).unwrap();
        for v in &mse {
            assert!(*v <= 1.1 * sigma * sigma, "mse {v}");
        }
        // Jacobians in the bulk of the training distribution: database
        // points whose standardized input lies within 1.5 of the mean.
        let input = m.subnets()[0].input_affine().clone();
        let mut checked = 0;
        for tr in db.iter().step_by(997) {
            let x = Vector::from_iterator(3, tr.s.iter().chain(tr.a.iter()).copied());
            if (x - &input.shift).component_div(&input.scale).norm() > 1.5 {
                continue;
            }
            let (f_s, f_a) = m.jacobians(&tr.s, &tr.a).unwrap();
            assert!((f_s - &env.params().a).norm() < 0.05);
            assert!((f_a - &env.params().b).norm() < 0.05);
            checked += 1;
        }
        assert!(checked >= 30);
    }

    #[test]
    fn divergence_rolls_back() {
        let (_, db) = lqg_database(100, 7);
        let mut m = DynamicsModel::random(2, 1, &[4], &mut stream(7, Stream::Init)).unwrap();
        let before = m.clone();
        let mut opt = Optimizer::sgd(1e300).unwrap();
        let rep = m.train(&db, 20, 16, &mut opt, &mut stream(7, Stream::Model)).unwrap();
        assert!(rep.aborted.is_some());
        assert_eq!(m, before);
    }

    #[test]
    fn linear_model_matches_lqg() {
        let p = LqgParams::default();
        let m = DynamicsModel::from_linear(&p.a, &p.b, &Vector::from_element(2, p.noise_std)).unwrap();
        let s = dvector![0.4, -1.0];
        let a = dvector![0.7];
        let xi = dvector![0.1, 2.0];
        let env = Lqg::new(p.clone()).unwrap();
        let want = env.step_reparam(&crate::envs::EnvState::new(s.clone(), 0), &a, &xi).unwrap().next_state;
        assert!((m.predict(&s, &a, &xi).unwrap() - want).amax() < 1e-12);
        let (f_s, f_a) = m.jacobians(&s, &a).unwrap();
        assert!((f_s - &p.a).amax() < 1e-15);
        assert!((f_a - &p.b).amax() < 1e-15);
    }

    #[test]
    fn checkpoint_round_trip() {
        let (_, db) = lqg_database(100, 8);
        let mut m = random_model_for(2, 1, 8);
        m.refit_standardization(&db).unwrap();
        let mut buf = Vec::new();
        m.write_checkpoint(&mut buf).unwrap();
        let back = DynamicsModel::read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }
}
