use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("derivative order {requested} not supported (max {supported})")]
    UnsupportedOrder { requested: usize, supported: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("inner solver failure: {0}")]
    InnerFailure(String),

    #[error("line search exhausted after {probes} probes (last L = {last_l:e}, rho = {last_rho:e})")]
    LineSearchExhausted {
        probes: usize,
        last_l: f64,
        last_rho: f64,
    },

    #[error("theory violation: {inequality} at N = {iteration} (slack {slack:e})")]
    TheoryViolation {
        inequality: String,
        iteration: usize,
        slack: f64,
    },

    #[error("stage {stage} regressed: gap {gap:e} > target {target:e}")]
    StageRegression { stage: usize, gap: f64, target: f64 },

    #[error("non-convex witness: Bregman ratio {ratio:e}")]
    NonConvexWitness { ratio: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("label domain error: {0}")]
    LabelDomain(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
