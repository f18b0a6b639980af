//! Differentiable-function substrate.
//!
//! [`DiffNetwork`] is a feedforward network with tanh hidden layers and a
//! linear output layer. It exposes forward evaluation, the exact input
//! Jacobian and vector-Jacobian products with respect to inputs and
//! parameters. [`ScaledNetwork`] wraps a network with fixed affine input and
//! output maps. [`Optimizer`] applies first-order updates to a
//! [`ParamVector`], and [`fd_check`] audits analytic gradients against
//! central finite differences.

mod fdcheck;
mod manifest;
mod network;
mod optim;
mod params;
mod scaled;

pub use fdcheck::{central_difference, fd_check, relative_error, FdReport, FD_STEP};
pub use manifest::Manifest;
pub use network::{DiffNetwork, Tape};
pub use optim::{Direction, Optimizer, OptimizerRule};
pub use params::{ParamVector, PARAM_MAGIC, PARAM_VERSION};
pub use scaled::{Affine, ScaledNetwork};
