use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("capacity exceeded: index {requested} is beyond the generator limit {limit}")]
    Capacity { requested: u64, limit: u64 },

    #[error("invalid point range [{from}, {to})")]
    Range { from: u64, to: u64 },

    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid kernel spec: {0}")]
    Spec(String),

    #[error("kernel {spec} is not positive definite: {detail}")]
    NotPositiveDefinite { spec: String, detail: String },

    #[error("integrand returned a non-finite value at node {index}")]
    Integrand { index: u64 },

    #[error("all integrand values are equal")]
    DegenerateData,

    #[error("objective is not finite at the initial hyperparameters")]
    InitNotFinite,

    #[error("size guard: n = {n} exceeds {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("data file: {0}")]
    Data(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}
