use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("round {round}: outcome {value} lies outside [{lower}, {upper}]")]
    OutcomeOutOfSpace {
        round: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("argument {value} lies outside the domain [{lower}, {upper}]")]
    OutOfDomain { value: f64, lower: f64, upper: f64 },

    #[error("quadratic form {value} is negative beyond tolerance (kernel is not PSD)")]
    PsdViolation { value: f64 },

    #[error("gram matrix has eigenvalue {min} below -{tolerance} * {max}")]
    NotPositiveSemidefinite { min: f64, max: f64, tolerance: f64 },

    #[error("infinite loss at prediction {prediction}")]
    InfiniteLoss { prediction: f64 },

    #[error("no sign change of the crossing function on ({lower}, {upper})")]
    NoSignChange { lower: f64, upper: f64 },

    #[error("crossing function is not finite at {at}")]
    NonFinite { at: f64 },

    #[error("situation for round {got} does not follow engine history of {expected} rounds")]
    OutOfOrder { expected: usize, got: usize },

    #[error("benchmark: {0}")]
    Benchmark(String),

    #[error("trace: {0}")]
    Trace(String),
}
