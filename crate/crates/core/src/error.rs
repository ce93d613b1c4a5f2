use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("input is empty")]
    EmptyInput,
    #[error("entry {index} is negative ({value})")]
    NegativeEntry { index: usize, value: f64 },
    #[error("entry {index} is not finite")]
    NonFiniteEntry { index: usize },
    #[error("entries sum to {sum}, expected 1 within 1e-12")]
    SumNotOne { sum: f64 },
    #[error("all entries are zero, cannot normalize")]
    AllZero,
    #[error("sample size must be at least 1")]
    ZeroSampleSize,
    #[error("input {0} is not finite")]
    NonFiniteInput(f64),
    #[error("gamma = 1 is not supported by this operation")]
    GammaOne,
    #[error("power sum is zero, Renyi entropy undefined")]
    DegenerateFunctional,
    #[error("category {value} of individual {index} is outside [0, {k})")]
    CategoryOutOfRange { index: usize, value: usize, k: usize },
    #[error("gamma must be > 1 here, got {0}")]
    GammaNotAboveOne(f64),
    #[error("stage-one value {value} for bin {bin} is outside [0, {max}]")]
    StageOneValueOutOfRange { bin: usize, value: f64, max: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("stage-two release is empty")]
    EmptyStageTwo,
    #[error("gamma = 1 is unsupported by the interactive branch")]
    GammaOneUnsupported,
    #[error("rate scan needs at least 4 points spanning a factor of 8: {0}")]
    InsufficientPoints(String),
    #[error("mse at axis value {0} is not positive, cannot take logarithms")]
    NonPositiveMse(f64),
    #[error("c_tilde = {0} is outside (0, 1/(6*sqrt(2))]")]
    CTildeOutOfRange(f64),
    #[error("gamma = {0} is outside (0, 2) minus {{1}}")]
    GammaOutOfRange(f64),
    #[error("K = {0} is too small, need K >= {1}")]
    KTooSmall(usize, usize),
    #[error("K = {0} is odd")]
    OddK(usize),
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("trial {index}: {source}")]
    Trial {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
