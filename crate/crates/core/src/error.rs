use alloc::string::String;

use crate::estimators::{Distribution, EstimatorKind};

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Optional objective features that some operations depend on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Capability {
    DualEvaluation,
    Gradient,
    HessianDiagonal,
    ThirdOrder,
}

impl core::fmt::Display for Capability {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Capability::DualEvaluation => "dual evaluation",
            Capability::Gradient => "gradient",
            Capability::HessianDiagonal => "hessian diagonal",
            Capability::ThirdOrder => "third-order contractions",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error("worker {0} posted more than one message")]
    DuplicateWorker(u32),
    #[error("worker {worker} is outside the cluster of {workers}")]
    UnknownWorker { worker: u32, workers: u32 },
    #[error("message from worker {0} is missing")]
    MissingWorker(u32),
    #[error("worker {worker} sent {found} scalars, mode expects {expected}")]
    PayloadLength { worker: u32, expected: usize, found: usize },
    #[error("no messages received for the round")]
    EmptyRound,
    #[error("malformed message: {0}")]
    Malformed(&'static str),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("{estimator} cannot use {found} perturbations")]
    InvalidDistribution {
        estimator: EstimatorKind,
        found: Distribution,
    },
    #[error("objective does not provide {0}")]
    MissingCapability(Capability),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("protocol error: {0}")]
    Protocol(#[from] ProtocolError),
    #[error("stale round: replica is at {expected}, message is for {found}")]
    StaleRound { expected: u64, found: u64 },
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
