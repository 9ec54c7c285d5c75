use std::fmt;

use thiserror::Error;

/// Structural hypotheses the solvers and the energy method rely on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    /// `a` is nonnegative and bounded by its declared sup norm.
    BoundedCoefficient,
    /// `psi` is monotone, Lipschitz with the declared constant, and `psi(0) = 0`.
    MonotoneLipschitz,
    /// Every noise mode is in `W^{1,inf}` and `sum_i (|e_i|^2 + |e_i'|^2)` converges.
    NoiseSummability,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Assumption::BoundedCoefficient => "bounded nonnegative diffusion coefficient",
            Assumption::MonotoneLipschitz => "monotone Lipschitz nonlinearity with psi(0) = 0",
            Assumption::NoiseSummability => "W^{1,inf} summability of the noise basis",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("assumption violated ({assumption}): {detail}")]
    AssumptionViolation {
        assumption: Assumption,
        detail: String,
    },

    #[error("time step {dt} exceeds the stability limit {limit} of the explicit scheme")]
    Stability { dt: f64, limit: f64 },

    #[error("numerical blow-up at step {step}: non-finite value at node {node}")]
    BlowUp {
        step: usize,
        node: usize,
        /// The offending state, kept for post-mortem serialization.
        state: Vec<f64>,
    },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("schedule mismatch: {0}")]
    ScheduleMismatch(String),

    #[error("increments file: {0}")]
    Increments(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn violation(assumption: Assumption, detail: impl Into<String>) -> Self {
        Error::AssumptionViolation {
            assumption,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
