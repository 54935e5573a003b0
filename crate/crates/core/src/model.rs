//! Shared domain types: models, questions, answers, review records, weights,
//! scores, and rankings.
//!
//! All types here are immutable value objects; they can be cloned and shared
//! freely between threads.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Identifier of one model in the pool. Ordered lexicographically; every
/// deterministic tie-break in the engine falls back to ascending `ModelId`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelId(String);

impl ModelId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::Schema("model id must be non-empty".into()));
        }
        Ok(ModelId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelId::new(s)
    }
}

/// The ordered pool of models under evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelRegistry {
    models: Vec<ModelId>,
}

impl ModelRegistry {
    /// Builds a registry from at least two distinct model ids. The given
    /// order is preserved and used for report row/column ordering.
    pub fn new(models: Vec<ModelId>) -> Result<Self> {
        if models.len() < 2 {
            return Err(Error::Schema(format!(
                "registry needs at least 2 models, got {}",
                models.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for m in &models {
            if !seen.insert(m.clone()) {
                return Err(Error::Schema(format!("duplicate model id {m:?} in registry")));
            }
        }
        Ok(ModelRegistry { models })
    }

    pub fn from_names<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let models = names
            .into_iter()
            .map(ModelId::new)
            .collect::<Result<Vec<_>>>()?;
        Self::new(models)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn contains(&self, id: &ModelId) -> bool {
        self.models.contains(id)
    }

    pub fn models(&self) -> &[ModelId] {
        &self.models
    }

    pub fn iter(&self) -> impl Iterator<Item = &ModelId> {
        self.models.iter()
    }
}

/// One open-ended question. `turns` holds every user turn of the
/// conversation; single-turn questions have exactly one entry. A reference
/// answer (one per turn) is present only for categories with a definitive
/// solution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Question {
    pub question_id: u64,
    pub category: String,
    pub turns: Vec<String>,
    pub reference: Option<Vec<String>>,
}

impl Question {
    pub fn is_multi_turn(&self) -> bool {
        self.turns.len() > 1
    }
}

/// A set of questions with unique ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QuestionSet {
    questions: Vec<Question>,
}

impl QuestionSet {
    pub fn new(questions: Vec<Question>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for q in &questions {
            if !seen.insert(q.question_id) {
                return Err(Error::Schema(format!(
                    "duplicate question_id {} in question set",
                    q.question_id
                )));
            }
        }
        Ok(QuestionSet { questions })
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    pub fn get(&self, question_id: u64) -> Option<&Question> {
        self.questions.iter().find(|q| q.question_id == question_id)
    }
}

/// One model's answer to one question, one text per conversation turn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Answer {
    pub question_id: u64,
    pub model: ModelId,
    pub turns: Vec<String>,
}

/// Relative verdict over an ordered answer pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    FirstWins,
    SecondWins,
    Tie,
}

impl Outcome {
    /// The same verdict seen from the swapped pair `(b, a)`.
    pub fn mirrored(self) -> Outcome {
        match self {
            Outcome::FirstWins => Outcome::SecondWins,
            Outcome::SecondWins => Outcome::FirstWins,
            Outcome::Tie => Outcome::Tie,
        }
    }
}

/// One reviewed battle: `reviewer` judged the pair `(model_a, model_b)` on
/// `question_id` and produced `outcome`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReviewRecord {
    pub question_id: u64,
    pub model_a: ModelId,
    pub model_b: ModelId,
    pub outcome: Outcome,
    pub reviewer: ModelId,
}

impl ReviewRecord {
    /// Canonical sort key used when persisting datasets.
    pub fn sort_key(&self) -> (u64, &str, &str, &str) {
        (
            self.question_id,
            self.model_a.as_str(),
            self.model_b.as_str(),
            self.reviewer.as_str(),
        )
    }
}

/// The collected answer-ranking data: review records plus the registry they
/// refer to.
///
/// Reviewers are normally distinct from both contestants. Datasets collected
/// for reviewer-bias analysis may relax that (see
/// [`ReviewDataset::new_with_self_reviews`]).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReviewDataset {
    records: Vec<ReviewRecord>,
    registry: ModelRegistry,
}

impl ReviewDataset {
    /// Validates and wraps records; every referenced model must be registered,
    /// contestants must differ, and reviewers must not judge their own battle.
    pub fn new(records: Vec<ReviewRecord>, registry: ModelRegistry) -> Result<Self> {
        Self::build(records, registry, false)
    }

    /// Like [`ReviewDataset::new`] but allows a contestant to review its own
    /// battle. Only bias studies should use this.
    pub fn new_with_self_reviews(records: Vec<ReviewRecord>, registry: ModelRegistry) -> Result<Self> {
        Self::build(records, registry, true)
    }

    fn build(records: Vec<ReviewRecord>, registry: ModelRegistry, allow_self: bool) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            for m in [&r.model_a, &r.model_b, &r.reviewer] {
                if !registry.contains(m) {
                    return Err(Error::Schema(format!(
                        "record {i}: model {m:?} not in registry"
                    )));
                }
            }
            if r.model_a == r.model_b {
                return Err(Error::Schema(format!(
                    "record {i}: contestants must differ, both are {:?}",
                    r.model_a
                )));
            }
            if !allow_self && (r.reviewer == r.model_a || r.reviewer == r.model_b) {
                return Err(Error::Schema(format!(
                    "record {i}: reviewer {:?} judges its own battle",
                    r.reviewer
                )));
            }
        }
        Ok(ReviewDataset { records, registry })
    }

    pub fn records(&self) -> &[ReviewRecord] {
        &self.records
    }

    pub fn registry(&self) -> &ModelRegistry {
        &self.registry
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Keeps only records whose reviewer is in `active`. The registry is
    /// unchanged: filtered-out models remain scoreable contestants.
    pub fn filter_reviewers(&self, active: &BTreeSet<ModelId>) -> ReviewDataset {
        ReviewDataset {
            records: self
                .records
                .iter()
                .filter(|r| active.contains(&r.reviewer))
                .cloned()
                .collect(),
            registry: self.registry.clone(),
        }
    }

    /// Sorts records by their canonical key so persisted datasets are
    /// byte-stable regardless of collection order.
    pub fn sort_canonical(&mut self) {
        self.records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    }
}

/// Learnable per-reviewer confidence weights, each in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceWeights<F: Real> {
    weights: BTreeMap<ModelId, F>,
}

impl<F: Real> ConfidenceWeights<F> {
    pub fn new(weights: BTreeMap<ModelId, F>) -> Result<Self> {
        for (id, w) in &weights {
            if !(*w > F::zero() && *w <= F::one()) {
                return Err(Error::Schema(format!(
                    "weight for {id:?} must lie in (0, 1], got {w}"
                )));
            }
        }
        Ok(ConfidenceWeights { weights })
    }

    /// Weight 1 for every registry model.
    pub fn uniform(registry: &ModelRegistry) -> Self {
        ConfidenceWeights {
            weights: registry.iter().map(|m| (m.clone(), F::one())).collect(),
        }
    }

    pub fn get(&self, id: &ModelId) -> Option<F> {
        self.weights.get(id).copied()
    }

    pub fn contains(&self, id: &ModelId) -> bool {
        self.weights.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Entries in ascending `ModelId` order.
    pub fn iter(&self) -> impl Iterator<Item = (&ModelId, F)> {
        self.weights.iter().map(|(id, w)| (id, *w))
    }

    pub fn model_ids(&self) -> impl Iterator<Item = &ModelId> {
        self.weights.keys()
    }
}

/// Per-model response scores under some scoring mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector<F: Real> {
    scores: BTreeMap<ModelId, F>,
}

impl<F: Real> ScoreVector<F> {
    pub fn new(scores: BTreeMap<ModelId, F>) -> Result<Self> {
        for (id, s) in &scores {
            if !s.is_finite() {
                return Err(Error::Schema(format!("score for {id:?} is not finite: {s}")));
            }
        }
        Ok(ScoreVector { scores })
    }

    pub fn zeros(registry: &ModelRegistry) -> Self {
        ScoreVector {
            scores: registry.iter().map(|m| (m.clone(), F::zero())).collect(),
        }
    }

    pub fn get(&self, id: &ModelId) -> Option<F> {
        self.scores.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Entries in ascending `ModelId` order.
    pub fn iter(&self) -> impl Iterator<Item = (&ModelId, F)> {
        self.scores.iter().map(|(id, s)| (id, *s))
    }
}

/// An ordered list of model ids, best first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranking {
    order: Vec<ModelId>,
}

impl Ranking {
    /// Wraps an order that must be a permutation of the registry.
    pub fn new(order: Vec<ModelId>, registry: &ModelRegistry) -> Result<Self> {
        if order.len() != registry.len() {
            return Err(Error::Schema(format!(
                "ranking has {} entries, registry has {}",
                order.len(),
                registry.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for id in &order {
            if !registry.contains(id) {
                return Err(Error::Schema(format!("ranked model {id:?} not in registry")));
            }
            if !seen.insert(id.clone()) {
                return Err(Error::Schema(format!("model {id:?} ranked twice")));
            }
        }
        Ok(Ranking { order })
    }

    /// Builds a ranking without a registry check; entries must be distinct.
    pub fn from_order(order: Vec<ModelId>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for id in &order {
            if !seen.insert(id.clone()) {
                return Err(Error::Schema(format!("model {id:?} ranked twice")));
            }
        }
        Ok(Ranking { order })
    }

    pub fn order(&self) -> &[ModelId] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// 1-based rank of `id`, if ranked.
    pub fn rank_of(&self, id: &ModelId) -> Option<usize> {
        self.order.iter().position(|m| m == id).map(|p| p + 1)
    }
}

/// Orders all registry models by score, best first. Exact score ties break
/// toward the lexicographically smaller id so reruns produce identical
/// rankings.
pub fn ranking_from_scores<F: Real>(
    scores: &ScoreVector<F>,
    registry: &ModelRegistry,
) -> Result<Ranking> {
    let mut entries: Vec<(&ModelId, F)> = Vec::with_capacity(registry.len());
    for id in registry.iter() {
        let score = scores
            .get(id)
            .ok_or_else(|| Error::Schema(format!("no score for registry model {id:?}")))?;
        entries.push((id, score));
    }
    entries.sort_by(|(id_a, s_a), (id_b, s_b)| {
        s_b.partial_cmp(s_a)
            .expect("scores are finite")
            .then_with(|| id_a.cmp(id_b))
    });
    Ranking::new(entries.into_iter().map(|(id, _)| id.clone()).collect(), registry)
}
