use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure of a Newton solve, with the residual norms of the accepted steps.
#[derive(Debug, Clone)]
pub struct Divergence {
    pub reason: String,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("size mismatch: expected {expected}, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("function does not live on the expected mesh")]
    MeshMismatch,

    #[error(
        "newton iteration diverged ({}) after {} iterations, last residual {:e}",
        .0.reason,
        .0.iterations,
        .0.residual_history.last().copied().unwrap_or(f64::NAN)
    )]
    Divergence(Box<Divergence>),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("p-structure bound `{bound}` violated: ratio {ratio:e} vs constant {constant:e} at sample {sample:?}")]
    BoundViolated {
        bound: &'static str,
        ratio: f64,
        constant: f64,
        sample: Vec<f64>,
    },

    #[error("certificate needs reference quantities that the history does not carry")]
    MissingReference,

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Wraps the error with the name of the stage that produced it.
    pub fn at(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping stage annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::SizeMismatch { expected, actual });
    }
    Ok(())
}
