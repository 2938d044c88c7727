use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("time grid: {0}")]
    InvalidGrid(String),
    #[error("case {case} missing at t = {t}")]
    MissingCase { t: f64, case: usize },
    #[error("case {case} appears more than once at t = {t}")]
    DuplicateCase { t: f64, case: usize },
    #[error("case index must be >= 1 (got {0})")]
    InvalidCaseIndex(usize),
    #[error("row {row}: expected {expected} covariates, found {found}")]
    RaggedJ { row: usize, expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFiniteValue(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid penalty: {0}")]
    InvalidPenalty(String),
    #[error("derivative of |beta_{k}| undefined at zero", k = .0 + 1)]
    NonDifferentiableAtZero(usize),
    #[error("fused pair tied at coordinate {k}", k = .0 + 1)]
    TiedFusedPair(usize),
    #[error("g(s, x) overflows at s = {s}, x = {x}")]
    Overflow { s: f64, x: f64 },
    #[error("zero denominator in closed-form update for coordinate {k}", k = .0 + 1)]
    ZeroDenominator(usize),
    #[error("singular block system for group {0}")]
    SingularSystem(usize),
    #[error("no sign-consistent branch for coordinate {k}", k = .0 + 1)]
    NoConsistentBranch(usize),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("singular design (condition estimate {0:.3e})")]
    SingularDesign(f64),
    #[error("minimum sits on the interval boundary at {0}")]
    NoInteriorMinimum(f64),
    #[error("transition produced a non-positive value at node {0}")]
    NegativePsi(usize),
    #[error("potential is not finite at node {0}")]
    UnboundedF(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
