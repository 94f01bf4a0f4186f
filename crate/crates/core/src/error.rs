use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OodError {
    #[error("posterior p(i|x) undefined at point {point}: mixture mass is zero")]
    UndefinedPosterior { point: usize },
    #[error("class conditional p(y|x,i) undefined at point {point}: in-distribution mass is zero")]
    UndefinedConditional { point: usize },
    #[error("alpha {alpha} too large: complement mass would be negative (max {max})")]
    AlphaTooLarge { alpha: f64, max: f64 },
    #[error("invalid mass: {0}")]
    InvalidMass(String),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("out-distribution has zero mass at point {point}")]
    OutSupportHole { point: usize },
    #[error("transform {transform} is not strictly increasing at {value}")]
    DomainViolation { transform: String, value: f64 },
    #[error("NaN score at point {point}")]
    NanScore { point: usize },
    #[error("empty sample")]
    EmptySample,
    #[error("report cell missing: row {row}, column {column}")]
    MissingCell { row: String, column: String },
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("training diverged at step {step}: loss is not finite")]
    DivergenceDetected { step: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = OodError> = std::result::Result<T, E>;

impl OodError {
    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        OodError::ShapeMismatch { expected: expected.to_string(), got: got.to_string() }
    }
}
