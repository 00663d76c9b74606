use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("coefficient A({0}) is numerically singular")]
    SingularCoefficient(i64),
    #[error("parse error at {position}: {reason}")]
    ParseError { position: String, reason: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("index {0} lies outside the cached window")]
    OutOfWindow(i64),
    #[error("lambda must be positive, got {0}")]
    NonpositiveLambda(f64),
    #[error("scaling factor must be positive, got {0}")]
    NonpositiveMu(f64),
    #[error("splitting is ambiguous at lambda = {lambda}: growth rate {rate} lies inside the gap tolerance")]
    AmbiguousSplitting { lambda: f64, rate: f64 },
    #[error("coefficient c({0}) is zero")]
    ZeroCoefficient(i64),
    #[error("spectrum reaches or extends past the scanned range boundary at {0}; widen the lambda range")]
    RangeTooNarrow(f64),
    #[error("window mismatch: {0}")]
    WindowMismatch(String),
    #[error("transform F({0}) is singular")]
    SingularTransform(i64),
    #[error("matrix is not upper triangular (lower entry {0:e})")]
    NotTriangular(f64),
    #[error("spectral gap {0} cannot be resolved")]
    GapUnresolvable(usize),
    #[error("off-block coupling {value:e} at split {index} exceeds tolerance")]
    CouplingResidual { index: usize, value: f64 },
    #[error("mu = {mu} is too small for the data at n = {n}")]
    InfeasibleMu { mu: f64, n: i64 },
    #[error("scaling bound violated: m1/m2 = {ratio} exceeds mu^2 = {limit}")]
    BoundViolation { ratio: f64, limit: f64 },
    #[error("beta bound {0:e} underflows")]
    BetaUnderflow(f64),
    #[error("beta = {beta} is not below the admissible bound {bound}")]
    InvalidBeta { beta: f64, bound: f64 },
    #[error("spectrum has {ell} intervals but dimension is {dimension}")]
    NotFullSpectrum { ell: usize, dimension: usize },
    #[error("spectrum is unbounded or empty within the scanned range")]
    UnboundedSpectrum,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
