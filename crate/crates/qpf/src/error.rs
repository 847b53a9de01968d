use thiserror::Error;

/// Errors raised by the library. Numerical findings (lemma violations,
/// failed predicates) are reported as data, not as errors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpfError {
    #[error("fibre value {value} left the domain [{lo}, {hi}]")]
    DomainExit { value: f64, lo: f64, hi: f64 },
    #[error("no preimage of {value} on fibre {theta}")]
    InverseOutOfRange { theta: f64, value: f64 },
    #[error("graph not invariant: residual {residual} exceeds {tolerance}")]
    NotInvariant { residual: f64, tolerance: f64 },
    #[error("no basin boundary found: every tested point converges down")]
    NoBasinBoundary,
    #[error("graphs sampled on different grids")]
    GridMismatch,
    #[error("no valid l for q = {q} in [{lo}, {hi})")]
    NoValidL { q: i64, lo: i64, hi: i64 },
    #[error("time {n} is not admissible")]
    NotAdmissible { n: i64 },
    #[error("E = {e} is below the two-fixed-point threshold E > 2")]
    EBelowThreshold { e: f64 },
    #[error("family is not monotone in beta; use the symmetric solver")]
    NotMonotone,
    #[error("target {target} is not reachable on [{lo}, {hi}]")]
    TargetUnreachable { target: f64, lo: f64, hi: f64 },
    #[error("no crossing of {target} found in the parent interval")]
    NoCrossing { target: f64 },
    #[error("solver failed: {0}")]
    SolveFailed(String),
    #[error("classification inconclusive: lambda(phi+) = {upper}, lambda(psi) = {middle}")]
    Inconclusive { upper: f64, middle: f64 },
    #[error("peak chain too short (length {len})")]
    ChainTooShort { len: usize },
    #[error("strict mode refused: {0}")]
    StrictRefused(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, QpfError>;
