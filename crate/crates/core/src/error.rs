use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate element {element}: Jacobian determinant {det_j:e}")]
    DegenerateElement { element: usize, det_j: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite coefficient in {0}")]
    NonFinite(String),

    #[error("structurally singular matrix (pivot failure at column {column})")]
    Singular { column: usize },

    #[error("solver breakdown: relative residual {last:e} above tolerance {tol:e}")]
    Breakdown {
        tol: f64,
        last: f64,
        residual_history: Vec<f64>,
    },

    #[error("unknown benchmark case `{0}`")]
    UnknownCase(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
