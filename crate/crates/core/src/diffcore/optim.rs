use serde::{Deserialize, Serialize};

use super::ParamVector;
use crate::error::{check_dim, Error, Result};

/// Sign convention of an update: policy objectives ascend, losses descend.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Ascent,
    Descent,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Ascent => 1.0,
            Direction::Descent => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum OptimizerRule {
    Sgd,
    /// `ms <- decay * ms + (1 - decay) * g^2`, step `lr * g / (sqrt(ms) + epsilon)`.
    /// `ms` starts at zero.
    Rmsprop { decay: f64, epsilon: f64 },
}

#[derive(Clone, Debug)]
pub struct Optimizer {
    step_size: f64,
    rule: OptimizerRule,
    mean_square: Vec<f64>,
}

impl Optimizer {
    pub fn new(step_size: f64, rule: OptimizerRule) -> Result<Self> {
        if !(step_size > 0.0 && step_size.is_finite()) {
            return Err(Error::InvalidConfig(format!("step size must be positive, got {step_size}")));
        }
        if let OptimizerRule::Rmsprop { decay, epsilon } = rule {
            if !(0.0..1.0).contains(&decay) || !(epsilon > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "rmsprop needs decay in [0, 1) and epsilon > 0, got {decay}, {epsilon}"
                )));
            }
        }
        Ok(Optimizer {
            step_size,
            rule,
            mean_square: Vec::new(),
        })
    }

    pub fn sgd(step_size: f64) -> Result<Self> {
        Self::new(step_size, OptimizerRule::Sgd)
    }

    pub fn rmsprop(step_size: f64, decay: f64, epsilon: f64) -> Result<Self> {
        Self::new(step_size, OptimizerRule::Rmsprop { decay, epsilon })
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn rule(&self) -> OptimizerRule {
        self.rule
    }

    /// Returns the updated parameters. On a non-finite gradient the error is
    /// returned and neither the parameters nor the optimizer state change.
    pub fn step(&mut self, p: &ParamVector, grad: &ParamVector, dir: Direction) -> Result<ParamVector> {
        let mut out = p.clone();
        self.apply(&mut out, grad, dir)?;
        Ok(out)
    }

    /// In-place form of [`step`](Self::step).
    pub fn apply(&mut self, p: &mut ParamVector, grad: &ParamVector, dir: Direction) -> Result<()> {
        check_dim("Optimizer::step", p.len(), grad.len())?;
        if !grad.is_finite() {
            return Err(Error::NonFinite("optimizer gradient".into()));
        }
        let lr = self.step_size * dir.sign();
        match self.rule {
            OptimizerRule::Sgd => p.add_scaled(lr, grad),
            OptimizerRule::Rmsprop { decay, epsilon } => {
                if self.mean_square.len() != p.len() {
                    self.mean_square = vec![0.0; p.len()];
                }
                for ((x, g), ms) in p
                    .as_mut_slice()
                    .iter_mut()
                    .zip(grad.as_slice())
                    .zip(self.mean_square.iter_mut())
                {
                    *ms = decay * *ms + (1.0 - decay) * g * g;
                    *x += lr * g / (ms.sqrt() + epsilon);
                }
            }
        }
        Ok(())
    }

    pub fn reset(&mut self) {
        self.mean_square.clear();
    }
}
