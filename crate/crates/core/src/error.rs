//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An assignment does not belong to the space it was used with.
    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),

    /// An instance index is outside `[0, total_size)`.
    #[error("index {index} out of range for space of size {size}")]
    IndexOutOfRange { index: u128, size: u128 },

    /// Enumeration was requested on a space larger than the allowed budget.
    #[error("enumeration budget exceeded: space has {required} cells, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    /// Space construction failed (empty domain, duplicate names, overflow).
    #[error("invalid space: {0}")]
    InvalidSpace(String),

    /// Template file or placeholder problem.
    #[error("template error: {0}")]
    Template(String),

    /// Arithmetic expression parse or evaluation failure.
    #[error("expression error: {0}")]
    Expr(String),

    /// A caller violated an operation's contract (empty vote list, M < 2, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A generation pool has no row for the queried assignment.
    #[error("cache miss: no pool row for assignment index {0}")]
    CacheMiss(u64),

    /// A pool file failed validation on load.
    #[error("pool error: {0}")]
    Pool(String),

    /// Proposal vector failed validation.
    #[error("invalid proposal: {0}")]
    InvalidProposal(String),

    /// Pooled reuse was requested on a trace without retained samples.
    #[error("reuse unavailable: {0}")]
    ReuseUnavailable(String),

    /// An analysis has no data to work on (zero failures, empty records).
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A coverage run has no trustworthy reference value.
    #[error("reference unavailable: {0}")]
    ReferenceUnavailable(String),

    /// The Pareto frontier never reaches the requested width.
    #[error("unreachable target: {0}")]
    UnreachableTarget(String),

    /// Failure propagated out of an oracle, annotated with context.
    #[error("oracle failure at {context}: {source}")]
    Oracle {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
