//! Experiment runner for [`vograd_core`].
//!
//! Carries everything that needs `std`: a rayon [`Executor`], TOML
//! configuration, CSV/JSON output, the figure experiments and a loopback TCP
//! transport for the cluster protocol.
//!
//! [`Executor`]: vograd_core::Executor

pub mod config;
pub mod exec;
pub mod experiments;
pub mod output;
pub mod transport;

pub use config::{BudgetMode, ConfigError, Experiment, ExperimentConfig};
pub use exec::RayonExecutor;
