use thiserror::Error;

/// Errors raised while fitting, applying, or (de)serializing flows.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("class index {index} out of range for {k} classes")]
    ClassOutOfRange { index: usize, k: usize },

    #[error("no class with label {0}")]
    UnknownLabel(i64),

    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is singular or not positive definite (smallest eigenvalue {0:e})")]
    Singular(f64),

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("degenerate layer fit: {0}")]
    Degenerate(String),

    #[error("layer {index}: {source}")]
    Layer {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported layer kind `{0}`")]
    UnsupportedLayer(String),

    #[error("unsupported model version {found} (this build reads version {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("model parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("csv error at row {row}{}: {message}", column.map(|c| format!(", column {c}")).unwrap_or_default())]
    Csv {
        row: usize,
        column: Option<usize>,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True when the failure is numerical rather than a problem with the inputs.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NotSymmetric(_)
            | Error::Singular(_)
            | Error::NonConvergence { .. }
            | Error::Degenerate(_) => true,
            Error::Layer { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
