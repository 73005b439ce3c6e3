use thiserror::Error;

/// Errors raised while reading expressions.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown identifier `{name}` at line {line}, column {column}")]
    UnknownIdentifier {
        name: String,
        line: usize,
        column: usize,
    },
    #[error("expected {expected} components, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value encountered{0}")]
    NonFinite(String),
    #[error("integrator step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("Hormander condition fails at depth {depth}: rank {rank} < {dim}")]
    Hormander { depth: usize, rank: usize, dim: usize },
    #[error("adapted frame incomplete: {found} independent fields of {dim}")]
    FrameIncomplete { found: usize, dim: usize },
    #[error("newton inversion diverged (residual {residual:e}, distance {radius:e} from base)")]
    NewtonDivergence { residual: f64, radius: f64 },
    #[error("system has no drift")]
    DriftAbsent,
    #[error("drift vanishes at the base point")]
    ZeroDrift,
    #[error("path velocity vanishes at t = {t}")]
    ZeroVelocity { t: f64 },
    #[error("frame degenerates along the path at t = {t}")]
    FrameDegenerate { t: f64 },
    #[error("tangency degree varies along the path ({first} at start, {found} at t = {t})")]
    TangencyVaries { first: usize, found: usize, t: f64 },
    #[error("drift is tangent to the path modulo the previous layer at t = {t}")]
    NonTangency { t: f64 },
    #[error("march stalled at parameter {param}")]
    Stall { param: f64 },
    #[error("fixed-time leg from t = {t} is infeasible within budget")]
    InfeasibleLeg { t: f64 },
    #[error("no feasible step above the resolution floor")]
    NoFeasibleStep,
    #[error("fit precondition: {0}")]
    FitPrecondition(String),
    #[error("no grid constant satisfies both inclusions: {0}")]
    NoBallBoxConstant(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown {what} `{name}`")]
    Unknown { what: &'static str, name: String },
}

pub type Result<T> = std::result::Result<T, Error>;
