use thiserror::Error;

/// Errors produced by the solvers and file readers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid too small: axis {axis} has {nodes} nodes, need at least {required}")]
    GridTooSmall {
        axis: usize,
        nodes: usize,
        required: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("lattices are not aligned: {0}")]
    Misaligned(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("Green's function is singular at coincident points")]
    SingularKernel,

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("malformed {what} file: {reason}")]
    Format { what: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
