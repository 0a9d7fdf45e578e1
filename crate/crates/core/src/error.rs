use thiserror::Error;

use crate::outer::OuterRecord;
use crate::subproblem::SubproblemSolution;

/// Ways a group partition can fail to be a disjoint cover of `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PartitionViolation {
    #[error("index {index} appears in more than one group")]
    Duplicate { index: usize },
    #[error("index {index} is out of range for dimension {n}")]
    OutOfRange { index: usize, n: usize },
    #[error("indices {indices:?} are not covered by any group")]
    Uncovered { indices: Vec<usize> },
    #[error("group {group} is empty")]
    EmptyGroup { group: usize },
    #[error("partition has no groups")]
    NoGroups,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid partition: {0}")]
    Partition(#[from] PartitionViolation),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix is numerically rank deficient (min/max |R_ii| = {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("anchor point is infeasible: constraint value {value:e} exceeds sigma {sigma:e}")]
    InfeasibleAnchor { value: f64, sigma: f64 },

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("inner solver hit the iteration cap ({iters}) before the stopping criteria held")]
    InnerExhausted {
        iters: usize,
        best: Box<SubproblemSolution>,
    },

    #[error("outer iteration {k} failed: {source}")]
    OuterAborted {
        k: usize,
        trace: Vec<OuterRecord>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
