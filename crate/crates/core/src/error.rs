use thiserror::Error;

/// Errors produced by the solvers, the particle system and the I/O helpers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The implicit stage could not be solved; the usual remedy is halving the time step.
    #[error("stage solve did not converge at step {step:?}: residual {residual:e} after {iterations} iterations")]
    NonConvergence {
        step: Option<usize>,
        residual: f64,
        iterations: usize,
    },

    #[error("linear solve stalled at step {step:?}: residual {residual:e} after {iterations} iterations")]
    LinearSolveFailure {
        step: Option<usize>,
        residual: f64,
        iterations: usize,
    },

    #[error("density estimate is degenerate at particle {particle}: {value}")]
    DegenerateDensity { particle: usize, value: f64 },

    /// A name that is not in the relevant registry.
    #[error("unknown {kind} `{name}`; known: {known}")]
    Unknown {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Attach the time-step index to a stage failure.
    pub(crate) fn at_step(self, index: usize) -> Self {
        match self {
            Error::NonConvergence {
                residual,
                iterations,
                ..
            } => Error::NonConvergence {
                step: Some(index),
                residual,
                iterations,
            },
            Error::LinearSolveFailure {
                residual,
                iterations,
                ..
            } => Error::LinearSolveFailure {
                step: Some(index),
                residual,
                iterations,
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
