//! Zeroth- and first-order gradient estimators built on Gaussian (and
//! Bernoulli) perturbations, together with their closed-form bias and
//! variance predictions.
//!
//! The crate is `no_std` (it needs `alloc`) and performs no IO. It provides:
//!
//! - [`objectives`]: the [`Objective`] interface plus a quadratic, a quartic
//!   and a small ReLU classifier with exact derivative information.
//! - [`autodiff`]: forward-mode dual numbers used for exact directional
//!   derivatives.
//! - [`estimators`]: the GP, antithetic GP, baseline GP, SPSA and
//!   directional-derivative estimators over a reproducible, seed-addressed
//!   perturbation source.
//! - [`analytics`]: predicted bias/variance per estimator and an empirical
//!   moment harness to check them.
//! - [`svo`]: stochastic variational optimization of the Gaussian upper bound
//!   over its mean and log-variance.
//! - [`distributed`]: a replica simulation of scalar-only seed-sharing SGD.
//!
//! Parallel fan-out is abstracted behind [`Executor`]; reductions always use
//! a fixed pairwise tree, so results are bit-identical however the work is
//! scheduled.
#![no_std]

extern crate alloc;
#[cfg(any(feature = "std", test))]
extern crate std;

pub mod analytics;
pub mod autodiff;
pub mod distributed;
mod error;
pub mod estimators;
pub mod exec;
pub mod objectives;
pub mod optim;
pub mod reduce;
pub mod rng;
pub mod svo;

pub use autodiff::{directional_derivative, Dual, Scalar};
pub use error::{Capability, Error, ProtocolError, Result};
pub use estimators::{
    sample_batch, BaselineMode, BaselineState, Distribution, EstimatorKind, GradientEstimate,
    PerturbationBatch,
};
pub use exec::{Executor, Serial};
pub use objectives::{Objective, ThirdOrder};
pub use optim::{Optimizer, OptimizerKind};
