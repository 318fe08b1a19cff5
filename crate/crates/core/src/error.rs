use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("letters span more than one component")]
    MixedComponents,
    #[error("free group systems do not match")]
    SystemMismatch,
    #[error("map is not an automorphism")]
    NotAnAutomorphism,
    #[error("vertex groups are not permuted by the automorphism: {0}")]
    NotInvariant(String),
    #[error("transition matrix is not irreducible")]
    NotIrreducible,
    #[error("iteration budget exceeded after {moves} moves ({detail})")]
    IterationBudgetExceeded { moves: usize, detail: String },
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("stabilizer heuristic inconclusive for {0}")]
    StabilizerHeuristicExhausted(String),
    #[error("depth budget exceeded: {0}")]
    DepthExceeded(String),
    #[error("stabilizer violation: {0}")]
    StabilizerViolation(String),
    #[error("map is not simplicial (lambda != 1)")]
    NotSimplicial,
    #[error("orbit graphs did not stabilize within depth {0}")]
    NotStabilized(usize),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("empty domain")]
    EmptyDomain,
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
