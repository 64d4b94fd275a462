use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),
    #[error("degenerate density: {0}")]
    DegenerateDensity(String),
    #[error("support violation: {0}")]
    SupportViolation(String),
    #[error("operation supports only d = {supported}, got d = {got}")]
    UnsupportedDimension { supported: usize, got: usize },
    #[error("unknown builtin game `{0}`")]
    UnknownGame(String),
    #[error("game `{name}` expects {expected} parameter(s), got {got}")]
    ParameterCount {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("time step {dt} exceeds stability bound {bound} at t = {t}")]
    StepSize { dt: f64, bound: f64, t: f64 },
    #[error("annealing schedule rejected: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Annealing(Vec<crate::dynamics::AnnealingViolation>),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
