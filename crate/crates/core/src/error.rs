use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature order {order} outside supported range 1..={cap}")]
    QuadratureOrder { order: usize, cap: usize },

    #[error("quadrature rule of order {order} too small, need at least {needed}")]
    Precision { order: usize, needed: usize },

    #[error("non-finite value {value} at {location}")]
    NonFinite { location: String, value: f64 },

    #[error("degenerate activation: E[phi'(x)^2] = {d2:e} is not positive")]
    DegenerateActivation { d2: f64 },

    #[error("Gaussian-Poincaré inequality violated: E[phi'^2] - Var[phi] = {gap:e}")]
    PoincareViolation { gap: f64 },

    #[error("row {row} of the raw weight matrix has zero norm")]
    DegenerateRow { row: usize },

    #[error("row {row} is constant and cannot be normalized")]
    ZeroVarianceRow { row: usize },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite activation at layer {layer} (0 = input adapter)")]
    Overflow { layer: usize },

    #[error("non-finite gradient for {what}; step refused")]
    NonFiniteGradient { what: String },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("finite-difference check over {entries} weights exceeds cap {cap}")]
    GradCheckCap { entries: usize, cap: usize },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
