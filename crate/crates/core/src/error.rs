use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("vectors span less than two dimensions (Gram determinant {gram_det:.3e})")]
    DegenerateSpan { gram_det: f64 },

    #[error("clone coefficients are not normalized: |alpha|^2 = {norm_sq:.12}")]
    NormalizationViolation { norm_sq: f64 },

    #[error("inputs {first} and {second} are the same ray")]
    DuplicateInput { first: usize, second: usize },

    #[error("clone {index} is parallel to its ideal clone")]
    DegenerateClone { index: usize },

    #[error("matrix has no entries")]
    EmptyMatrix,

    #[error("entry ({row}, {col}) is not an exact rational: {value}")]
    NonRationalEntry { row: usize, col: usize, value: String },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("no root of the rank constraint found for c_q = {c_q}")]
    NoRootFound { c_q: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the CLI: 3 for data/dimension errors, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DimensionMismatch { .. } => 3,
            _ => 2,
        }
    }
}
