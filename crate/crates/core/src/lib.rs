//! Peer-review ranking engine.
//!
//! A pool of models answers open-ended questions and judges each other's
//! answers pairwise. From those judgments the engine scores every model,
//! learns per-reviewer confidence weights by maximizing the correlation
//! between weights and the scores they induce, optionally eliminates
//! low-scoring reviewers, and evaluates the resulting ranking against a
//! reference with rank-correlation and entropy metrics.
//!
//! The numeric core is generic over the scalar type (see [`scalar::Real`]);
//! the `f64` aliases below cover the common case.

// Validation sites compare as `!(x > bound)` so a NaN fails closed.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod consistency;
pub mod elimination;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod review;
pub mod scalar;
pub mod scoring;
pub mod sim;

pub use error::{Error, Result};
pub use model::{
    ranking_from_scores, Answer, ConfidenceWeights, ModelId, ModelRegistry, Outcome, Question,
    QuestionSet, Ranking, ReviewDataset, ReviewRecord, ScoreVector,
};
pub use scalar::Real;

/// Default scalar used by the CLI pipeline and the file formats.
pub type Scalar = f64;

/// `f64` confidence weights.
pub type Weights = ConfidenceWeights<Scalar>;

/// `f64` score vector.
pub type Scores = ScoreVector<Scalar>;

/// `f64` alignment report.
pub type Report = metrics::AlignmentReport<Scalar>;
