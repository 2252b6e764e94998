use thiserror::Error;

/// Failures of expression construction, parsing, and evaluation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown coordinate `{name}` at {pos}")]
    UnknownCoordinate { name: String, pos: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("missing coordinate {0}")]
    MissingCoordinate(String),
    #[error("no derivative rule registered for `{0}`")]
    UnregisteredDerivative(String),
    #[error("inconclusive: every resample hit a domain error")]
    Inconclusive,
}

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("chart mismatch: {0}")]
    ChartMismatch(String),
    #[error("form is not closed")]
    NotClosed,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("wrong chart: {0}")]
    WrongChart(String),
    #[error("grid too coarse: need at least 3 points per axis")]
    GridTooCoarse,
    #[error("sample mismatch: {0}")]
    SampleMismatch(String),
    #[error("coefficients are not projectable (defect {0:.3e})")]
    NotProjectable(f64),
    #[error("point is off the constraint set (violation {0:.3e})")]
    PointOffConstraint(f64),
    #[error("layer mismatch: {0}")]
    LayerMismatch(String),
    #[error("no cokernel basis registered for theory `{0}`")]
    NoCokernelRegistered(String),
    #[error("degenerate structure: {0}")]
    DegenerateStructure(String),
    #[error("non-finite state at step {0}")]
    NonFiniteState(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("theory file error: {0}")]
    TheoryFile(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
