use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MzError {
    #[error("invalid exponent: {0}")]
    InvalidExponent(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("moment diverges: s = {s} is not below r = {r}")]
    MomentDiverges { r: f64, s: f64 },

    #[error("quadrature did not converge within budget (achieved error {achieved:.3e})")]
    QuadratureFailure { achieved: f64 },

    #[error("undefined alignment: functional is identically zero")]
    UndefinedAlignment,

    #[error("sign enumeration over 2^{bits} vertices exceeds the 2^25 guard")]
    EnumerationTooLarge { bits: u32 },

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("operator not positive: coefficient {index} is {value}")]
    NotPositive { index: usize, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, MzError>;
