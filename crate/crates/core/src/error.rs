use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("yield threshold must be positive, got {0}")]
    NonPositiveThreshold(f64),

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("threshold violation at t = {t}, node {node}: g = {value} outside [{lower}, {upper}]")]
    ThresholdViolation {
        t: f64,
        node: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("threshold changes by {gap} between s and t, which is not below C1 = {c1}")]
    WindowTooWide { gap: f64, c1: f64 },

    #[error("missing time derivative: {0}")]
    MissingDerivative(String),

    #[error("projected-gradient solve did not converge in {iterations} iterations (residual {residual:e})")]
    ProxNoConvergence { iterations: usize, residual: f64 },

    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    LinearNoConvergence { iterations: usize, residual: f64 },

    #[error("Picard iteration did not converge in {iterations} iterations; ratio history {ratios:?}")]
    PicardNoConvergence { iterations: usize, ratios: Vec<f64> },

    #[error("bad parameters: {0}")]
    BadParameters(String),

    #[error("bad mollification plan: {0}")]
    BadPlan(String),

    #[error("degenerate radius: {0}")]
    DegenerateRadius(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("assumption {assumption} violated: {detail}")]
    AssumptionViolation { assumption: String, detail: String },

    #[error("invariant suite failure in {invariant} ({instance})")]
    SuiteFailure { invariant: String, instance: String },

    #[error("window {window}, step {step} (t = {t}): {source}")]
    Step {
        window: usize,
        step: usize,
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Strips step context and returns the innermost error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Step { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
