use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("polynomial has no coefficients or a non-finite coefficient")]
    InvalidPolynomial,
    #[error("operation requires a polynomial of degree at least one")]
    DegreeZero,
    #[error("root finding is ill-conditioned: {0}")]
    IllConditioned(String),
    #[error("rebuilt polynomial has a vanishing constant term and cannot be normalized")]
    ZeroConstantTerm,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("transfer function is improper (numerator degree {num} > denominator degree {den})")]
    ImproperTransferFunction { num: usize, den: usize },
    #[error("denominator vanishes at s = {re} + {im}i")]
    PoleOnGrid { re: f64, im: f64 },
    #[error("filter is not asymptotically stable")]
    UnstableFilter,
    #[error("signal has no samples")]
    EmptySignal,
    #[error("sample times must be finite and strictly increasing")]
    NonIncreasingTimes,
    #[error("invalid multisine: {0}")]
    InvalidMultisine(String),
    #[error("invalid sampling bounds: {0}")]
    InvalidBounds(String),
    #[error("invalid model order: {0}")]
    InvalidOrder(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("least-squares regression is singular (condition estimate {condition:e})")]
    SingularRegression { condition: f64 },
    #[error("IV normal matrix is near singular (condition estimate {condition:e})")]
    NearSingularNormalMatrix { condition: f64 },
    #[error("input excitation order too low: {0}")]
    AssumptionA3Violated(String),
    #[error("sampling grid is resonant with the excitation: {0}")]
    ResonantGrid(String),
    #[error("experiment spec invalid: {0}")]
    SpecInvalid(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
