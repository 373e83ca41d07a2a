use thiserror::Error;

/// Domain errors shared by every module.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("parse error at {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("variable {0} has no image")]
    MissingVariable(String),
    #[error("candidate count {count} exceeds the cap {cap}")]
    BudgetExceeded { cap: usize, count: usize },
    #[error("assignment is not a solution: {0}")]
    NotASolution(String),
    #[error("not a standard quadratic equation (atom {position}): {msg}")]
    NotStandard { position: usize, msg: String },
    #[error("no boundary connection ({0}, {1}, {2})")]
    NoSuchConnection(usize, usize, usize),
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("bases {0} and its dual are not matched")]
    NotMatched(usize),
    #[error("base {0} is not lonely")]
    NotLonely(usize),
    #[error("boundary {0} is not tied")]
    UntiedBoundary(usize),
    #[error("section [{0}, {1}] is not closed")]
    SectionNotClosed(usize, usize),
    #[error("equation has boundary connections")]
    HasConnections,
    #[error("node is terminal")]
    TerminalNode,
    #[error("invariant violation: {0}")]
    Violation(String),
    #[error("word shorter than the period")]
    ShorterThanPeriod,
    #[error("not a maximal subtree: {0}")]
    NotATree(String),
    #[error("containment not witnessed: {0}")]
    ContainmentNotWitnessed(String),
    #[error("bad witness: {0}")]
    BadWitness(String),
    #[error("instance too large: {0}")]
    TooLarge(String),
    #[error("malformed input: {0}")]
    Invalid(String),
}

impl Error {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::MissingVariable(_) => "missing-variable",
            Error::BudgetExceeded { .. } => "budget-exceeded",
            Error::NotASolution(_) => "not-a-solution",
            Error::NotStandard { .. } => "not-standard",
            Error::NoSuchConnection(..) => "no-such-connection",
            Error::PreconditionFailed(_) => "precondition-failed",
            Error::NotMatched(_) => "not-matched",
            Error::NotLonely(_) => "not-lonely",
            Error::UntiedBoundary(_) => "untied-boundary",
            Error::SectionNotClosed(..) => "section-not-closed",
            Error::HasConnections => "has-connections",
            Error::TerminalNode => "terminal-node",
            Error::Violation(_) => "violation",
            Error::ShorterThanPeriod => "shorter-than-period",
            Error::NotATree(_) => "not-a-tree",
            Error::ContainmentNotWitnessed(_) => "containment-not-witnessed",
            Error::BadWitness(_) => "bad-witness",
            Error::TooLarge(_) => "too-large",
            Error::Invalid(_) => "invalid",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
