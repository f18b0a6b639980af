//! Stochastic value gradient policy optimization.
//!
//! The crate is organised bottom-up:
//!
//! - [`diffcore`]: small tanh networks with exact Jacobians and parameter
//!   gradients, optimizers and a finite-difference audit.
//! - [`envs`]: re-parameterized stochastic environments (Hand, cart-pole
//!   swing-up, linear-quadratic-Gaussian) with analytic derivatives.
//! - [`policy`], [`dynmodel`], [`valuefn`]: the re-parameterized Gaussian
//!   policy, the learned per-dimension dynamics model and the critics.
//! - [`replay`]: the experience database and importance weights.
//! - [`svg`]: the gradient estimators (SVG(inf), SVG(1), SVG(0), the planner
//!   and the likelihood-ratio actor-critic) and the replay update.
//! - [`harness`]: experiment configuration, training loops, evaluation,
//!   metrics and checkpoints.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffcore;
pub mod dynmodel;
pub mod envs;
pub mod error;
pub mod harness;
pub mod policy;
pub mod replay;
pub mod rng;
pub mod svg;
pub mod valuefn;

pub use error::{Error, Result};

/// Column vector type used for states, actions and noises.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix type used for Jacobians.
pub type Matrix = nalgebra::DMatrix<f64>;
