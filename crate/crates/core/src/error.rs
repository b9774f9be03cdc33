use thiserror::Error;

/// Errors raised across the library. Every variant maps to a stable,
/// machine-readable code (see [`Error::code`]).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("empty input")]
    EmptyInput,
    #[error("call prices admit arbitrage: {0}")]
    ArbitrageViolation(String),
    #[error("at least 3 strikes are required, got {0}")]
    InsufficientPoints(usize),
    #[error("potential is not finite at x = {0}")]
    NonfinitePotential(f64),
    #[error("mean is undefined (infinite first moment)")]
    UndefinedMean,
    #[error("wronskian bound undefined: target is a point mass at the start {0}")]
    PointMassAtStart(f64),
    #[error("wronskian {w} outside admissible range (0, {w_max}]")]
    WronskianOutOfRange { w: f64, w_max: f64 },
    #[error("start point {x0} outside support [{lo}, {hi}]")]
    StartOutsideSupport { x0: f64, lo: f64, hi: f64 },
    #[error("eigenfunction continuation overflowed at x = {0}")]
    IntegrationOverflow(f64),
    #[error("scale map is not strictly increasing near x = {0}")]
    NonMonotoneMap(f64),
    #[error("grid degenerate: {0}")]
    GridDegenerate(String),
    #[error("engine mismatch: {0}")]
    EngineMismatch(String),
    #[error("simulation budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("start {0} is not a density point of the target")]
    NotDensityPoint(f64),
    #[error("boundary behaviour unsupported: {0}")]
    UnsupportedBoundary(String),
    #[error("unknown figure '{0}'")]
    UnknownFigure(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameters(_) => "invalid-parameters",
            Error::EmptyInput => "empty-input",
            Error::ArbitrageViolation(_) => "arbitrage-violation",
            Error::InsufficientPoints(_) => "insufficient-points",
            Error::NonfinitePotential(_) => "nonfinite-potential",
            Error::UndefinedMean => "undefined-mean",
            Error::PointMassAtStart(_) => "point-mass-at-start",
            Error::WronskianOutOfRange { .. } => "wronskian-out-of-range",
            Error::StartOutsideSupport { .. } => "start-outside-support",
            Error::IntegrationOverflow(_) => "integration-overflow",
            Error::NonMonotoneMap(_) => "non-monotone-map",
            Error::GridDegenerate(_) => "grid-degenerate",
            Error::EngineMismatch(_) => "engine-mismatch",
            Error::BudgetExceeded(_) => "budget-exceeded",
            Error::NotDensityPoint(_) => "not-density-point",
            Error::UnsupportedBoundary(_) => "unsupported-boundary",
            Error::UnknownFigure(_) => "unknown-figure",
            Error::Parse(_) => "parse-error",
            Error::Io(_) => "io-error",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
