use std::path::PathBuf;

use crate::group::GroupId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by the command-line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Infeasible,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: malformed line: {reason}")]
    MalformedLine {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}:{line}: self loop on node {node}")]
    SelfLoop {
        path: String,
        line: usize,
        node: u32,
    },
    #[error("node {0} has no sensitive attribute")]
    MissingAttribute(u32),
    #[error("unknown node {0}")]
    UnknownNode(u32),
    #[error("empty edge set")]
    EmptyEdgeSet,
    #[error("group {0} has {1} edges, at least 3 are needed to stratify")]
    GroupTooSmall(GroupId, usize),
    #[error("group {group}: requested {requested} non-edges but only {available} exist")]
    NotEnoughNonEdges {
        group: GroupId,
        requested: usize,
        available: usize,
    },
    #[error("split ratios must be positive and sum to 1, got {0:?}")]
    InvalidRatios(Vec<f64>),
    #[error("no embedding for node {0}")]
    MissingEmbedding(u32),
    #[error("embedding dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("duplicate candidate pair ({0}, {1})")]
    DuplicatePair(u32, u32),
    #[error("non-finite score for pair ({0}, {1})")]
    NonFiniteScore(u32, u32),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("group {0} is observed but has zero target mass")]
    ZeroTargetMass(GroupId),
    #[error("empty ranking")]
    EmptyRanking,
    #[error("cutoff {k} out of range for length {len}")]
    KOutOfRange { k: usize, len: usize },
    #[error("{selected} {class} entries selected from a pool of {pool}")]
    PoolSmallerThanSelected {
        class: &'static str,
        selected: usize,
        pool: usize,
    },
    #[error("empty score group")]
    EmptyGroup,
    #[error("at least two non-empty groups are required")]
    FewerThanTwoGroups,
    #[error("no positives in the candidate pool")]
    NoPositives,
    #[error("relevance vector has {flagged} relevant entries but total_positives = {total}")]
    InconsistentRelevance { flagged: usize, total: usize },
    #[error("all candidate lists are empty")]
    EmptyInput,
    #[error("lambda must lie in [0, 1], got {0}")]
    LambdaOutOfRange(f64),
    #[error("k = {k} exceeds the combined pool size {pool}")]
    InfeasibleK { k: usize, pool: usize },
    #[error("multiset of size {n} exceeds the enumeration guard {limit}")]
    TooLarge { n: usize, limit: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        source: Box<Error>,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: &str, line: usize, reason: impl Into<String>) -> Self {
        Error::MalformedLine {
            path: path.to_string(),
            line,
            reason: reason.into(),
        }
    }

    /// Wraps the error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping stage context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self.root() {
            Error::InvalidRatios(_)
            | Error::InvalidDistribution(_)
            | Error::LambdaOutOfRange(_)
            | Error::Config(_)
            | Error::Json(_) => ErrorKind::Config,
            Error::GroupTooSmall(..)
            | Error::NotEnoughNonEdges { .. }
            | Error::InfeasibleK { .. }
            | Error::TooLarge { .. }
            | Error::KOutOfRange { .. } => ErrorKind::Infeasible,
            _ => ErrorKind::Data,
        }
    }
}
