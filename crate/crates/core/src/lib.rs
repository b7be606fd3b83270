//! Fair link prediction by exposure-aware ranking aggregation.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the bottom fix the scalar to `f64` for ordinary use.

pub mod error;
pub mod fairness;
pub mod graph;
pub mod group;
pub mod io;
pub mod moral;
pub mod oracle;
pub mod pipeline;
pub mod ranking;
pub mod scalar;
pub mod scorers;
pub mod split;
pub mod synthetic;
pub mod utility;

pub use error::{Error, ErrorKind, Result};
pub use graph::SensitiveGraph;
pub use group::{GroupId, NodeId, Pair};
pub use scalar::Scalar;

pub type GroupDistribution = group::GroupDistribution<f64>;
pub type ScoredCandidate = ranking::ScoredCandidate<f64>;
pub type GroupedCandidateSet = ranking::GroupedCandidateSet<f64>;
pub type Ranking = ranking::Ranking<f64>;
pub type Embeddings = scorers::Embeddings<f64>;
pub type Scorer = scorers::Scorer<f64>;
pub type Aggregation = moral::Aggregation<f64>;
pub type AggregationTrace = moral::AggregationTrace<f64>;
pub type GapCurve = moral::GapCurve<f64>;
pub type ExtremeResult = oracle::ExtremeResult<f64>;

pub type GroupDistributionF32 = group::GroupDistribution<f32>;
pub type RankingF32 = ranking::Ranking<f32>;
