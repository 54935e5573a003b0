//! Response-score computation from a review dataset.
//!
//! Three mechanisms: a plain weighted win-count, sequential Elo updates, and
//! an iterated rank-credit scheme. All of them weight each judgment by the
//! reviewer's confidence weight.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    ranking_from_scores, ConfidenceWeights, ModelId, Outcome, Ranking, ReviewDataset, ScoreVector,
};
use crate::scalar::Real;

/// Elo mechanism constants.
#[derive(Debug, Clone, PartialEq)]
pub struct EloConfig<F: Real> {
    pub base: F,
    pub scale: F,
    pub initial: F,
    pub k_factor: F,
    pub passes: usize,
    pub shuffle_seed: u64,
}

impl<F: Real> EloConfig<F> {
    pub fn new(shuffle_seed: u64) -> Self {
        EloConfig {
            base: F::from_f64_lossy(10.0),
            scale: F::from_f64_lossy(400.0),
            initial: F::from_f64_lossy(1000.0),
            k_factor: F::from_f64_lossy(32.0),
            passes: 1,
            shuffle_seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.base > F::one()) {
            return Err(Error::Argument(format!("elo base must exceed 1, got {}", self.base)));
        }
        if !(self.scale > F::zero()) {
            return Err(Error::Argument(format!("elo scale must be positive, got {}", self.scale)));
        }
        if self.passes == 0 {
            return Err(Error::Argument("elo passes must be >= 1".into()));
        }
        Ok(())
    }
}

/// Rank mechanism constants.
#[derive(Debug, Clone, PartialEq)]
pub struct RankConfig<F: Real> {
    pub k: F,
    pub passes: usize,
}

impl<F: Real> Default for RankConfig<F> {
    fn default() -> Self {
        RankConfig {
            k: F::from_f64_lossy(200.0),
            passes: 3,
        }
    }
}

impl<F: Real> RankConfig<F> {
    fn validate(&self) -> Result<()> {
        if !(self.k > F::zero()) {
            return Err(Error::Argument(format!("rank K must be positive, got {}", self.k)));
        }
        if self.passes == 0 {
            return Err(Error::Argument("rank passes must be >= 1".into()));
        }
        Ok(())
    }
}

/// Which scoring mechanism turns review records into response scores.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoringMechanism<F: Real> {
    /// Weighted win-count; ties earn `tie_credit` (1/2 by default, matching
    /// the tie treatment of the other mechanisms).
    Plain { tie_credit: F },
    Elo(EloConfig<F>),
    Rank(RankConfig<F>),
}

impl<F: Real> ScoringMechanism<F> {
    pub fn plain() -> Self {
        ScoringMechanism::Plain {
            tie_credit: F::from_f64_lossy(0.5),
        }
    }
}

/// A single contestant's view of one judged battle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DuelResult {
    Win,
    Tie,
    Loss,
}

fn credit_pair<F: Real>(outcome: Outcome) -> (F, F) {
    let half = F::from_f64_lossy(0.5);
    match outcome {
        Outcome::FirstWins => (F::one(), F::zero()),
        Outcome::SecondWins => (F::zero(), F::one()),
        Outcome::Tie => (half, half),
    }
}

struct Indexed<'a, F: Real> {
    index: HashMap<&'a ModelId, usize>,
    weights: Vec<Option<F>>,
}

impl<'a, F: Real> Indexed<'a, F> {
    fn new(dataset: &'a ReviewDataset, weights: &ConfidenceWeights<F>) -> Self {
        let index: HashMap<&ModelId, usize> = dataset
            .registry()
            .iter()
            .enumerate()
            .map(|(i, id)| (id, i))
            .collect();
        let weights = dataset
            .registry()
            .iter()
            .map(|id| weights.get(id))
            .collect();
        Indexed { index, weights }
    }

    fn id_index(&self, id: &ModelId) -> usize {
        self.index[id]
    }

    fn reviewer_weight(&self, reviewer: &ModelId) -> Result<F> {
        self.weights[self.id_index(reviewer)]
            .ok_or_else(|| Error::Schema(format!("no confidence weight for reviewer {reviewer:?}")))
    }
}

fn to_score_vector<F: Real>(dataset: &ReviewDataset, scores: Vec<F>) -> Result<ScoreVector<F>> {
    ScoreVector::new(
        dataset
            .registry()
            .iter()
            .cloned()
            .zip(scores)
            .collect(),
    )
}

/// Plain weighted scores: each win earns the reviewer's weight, each tie
/// `tie_credit` times it. Models without records score zero.
pub fn weighted_scores<F: Real>(
    dataset: &ReviewDataset,
    weights: &ConfidenceWeights<F>,
    tie_credit: F,
) -> Result<ScoreVector<F>> {
    if !(tie_credit >= F::zero() && tie_credit <= F::one()) {
        return Err(Error::Argument(format!(
            "tie credit must lie in [0, 1], got {tie_credit}"
        )));
    }
    let idx = Indexed::new(dataset, weights);
    let mut scores = vec![F::zero(); dataset.registry().len()];
    for record in dataset.records() {
        let w = idx.reviewer_weight(&record.reviewer)?;
        let (credit_a, credit_b) = match record.outcome {
            Outcome::FirstWins => (F::one(), F::zero()),
            Outcome::SecondWins => (F::zero(), F::one()),
            Outcome::Tie => (tie_credit, tie_credit),
        };
        scores[idx.id_index(&record.model_a)] += credit_a * w;
        scores[idx.id_index(&record.model_b)] += credit_b * w;
    }
    to_score_vector(dataset, scores)
}

/// Elo update term for the contestant holding rating `g_j` against `g_k`:
/// `outcome_credit - 1 / (1 + base^((g_k - g_j) / scale))`.
pub fn elo_term<F: Real>(g_j: F, g_k: F, outcome_credit: F, base: F, scale: F) -> F {
    let expected = F::one() / (F::one() + base.powf((g_k - g_j) / scale));
    outcome_credit - expected
}

/// Sequential Elo over the dataset: ratings start at `cfg.initial` and every
/// record moves both contestants by `k_factor * w(reviewer) * elo_term(...)`,
/// evaluated on the pre-update ratings. Records are visited in seeded
/// shuffled order, `cfg.passes` times.
pub fn run_elo<F: Real>(
    dataset: &ReviewDataset,
    weights: &ConfidenceWeights<F>,
    cfg: &EloConfig<F>,
) -> Result<ScoreVector<F>> {
    cfg.validate()?;
    let idx = Indexed::new(dataset, weights);
    let mut ratings = vec![cfg.initial; dataset.registry().len()];
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    for _ in 0..cfg.passes {
        order.shuffle(&mut rng);
        for &r in &order {
            let record = &dataset.records()[r];
            let w = idx.reviewer_weight(&record.reviewer)?;
            let (credit_a, credit_b) = credit_pair::<F>(record.outcome);
            let a = idx.id_index(&record.model_a);
            let b = idx.id_index(&record.model_b);
            let delta_a = cfg.k_factor * w * elo_term(ratings[a], ratings[b], credit_a, cfg.base, cfg.scale);
            let delta_b = cfg.k_factor * w * elo_term(ratings[b], ratings[a], credit_b, cfg.base, cfg.scale);
            ratings[a] += delta_a;
            ratings[b] += delta_b;
        }
    }
    to_score_vector(dataset, ratings)
}

/// Rank-credit term for a contestant at 1-based `rank_j` against `rank_k`:
/// a win pays `1 + (rank_j - rank_k) / K` (an upset against a better-ranked
/// opponent pays more), a tie 1/2, a loss nothing.
pub fn rank_term<F: Real>(rank_j: usize, rank_k: usize, result: DuelResult, k: F) -> F {
    match result {
        DuelResult::Win => {
            let gap = F::from_isize(rank_j as isize - rank_k as isize).expect("rank gap fits scalar");
            F::one() + gap / k
        }
        DuelResult::Tie => F::from_f64_lossy(0.5),
        DuelResult::Loss => F::zero(),
    }
}

/// Iterated rank scoring: ranks start from unweighted win-counts, then each
/// pass recomputes every score as the weighted sum of [`rank_term`] credits
/// under the current ranks and re-ranks. Stops early once the ranking is
/// stable.
pub fn run_rank<F: Real>(
    dataset: &ReviewDataset,
    weights: &ConfidenceWeights<F>,
    cfg: &RankConfig<F>,
) -> Result<ScoreVector<F>> {
    cfg.validate()?;
    let idx = Indexed::new(dataset, weights);
    let registry = dataset.registry();

    let initial = weighted_scores(
        dataset,
        &ConfidenceWeights::uniform(registry),
        F::from_f64_lossy(0.5),
    )?;
    let mut ranking = ranking_from_scores(&initial, registry)?;
    let mut scores = vec![F::zero(); registry.len()];

    for _ in 0..cfg.passes {
        let mut rank_of = vec![0usize; registry.len()];
        for (pos, id) in ranking.order().iter().enumerate() {
            rank_of[idx.id_index(id)] = pos + 1;
        }
        scores.iter_mut().for_each(|s| *s = F::zero());
        for record in dataset.records() {
            let w = idx.reviewer_weight(&record.reviewer)?;
            let a = idx.id_index(&record.model_a);
            let b = idx.id_index(&record.model_b);
            let (result_a, result_b) = match record.outcome {
                Outcome::FirstWins => (DuelResult::Win, DuelResult::Loss),
                Outcome::SecondWins => (DuelResult::Loss, DuelResult::Win),
                Outcome::Tie => (DuelResult::Tie, DuelResult::Tie),
            };
            scores[a] += rank_term(rank_of[a], rank_of[b], result_a, cfg.k) * w;
            scores[b] += rank_term(rank_of[b], rank_of[a], result_b, cfg.k) * w;
        }
        let next = to_score_vector(dataset, scores.clone())?;
        let next_ranking = ranking_from_scores(&next, registry)?;
        if next_ranking == ranking {
            break;
        }
        ranking = next_ranking;
    }
    to_score_vector(dataset, scores)
}

/// Scores the dataset under the chosen mechanism.
pub fn mechanism_scores<F: Real>(
    dataset: &ReviewDataset,
    weights: &ConfidenceWeights<F>,
    mechanism: &ScoringMechanism<F>,
) -> Result<ScoreVector<F>> {
    match mechanism {
        ScoringMechanism::Plain { tie_credit } => weighted_scores(dataset, weights, *tie_credit),
        ScoringMechanism::Elo(cfg) => run_elo(dataset, weights, cfg),
        ScoringMechanism::Rank(cfg) => run_rank(dataset, weights, cfg),
    }
}

/// Builds the ranking induced by a mechanism, tie-broken by ascending id.
pub fn mechanism_ranking<F: Real>(
    dataset: &ReviewDataset,
    weights: &ConfidenceWeights<F>,
    mechanism: &ScoringMechanism<F>,
) -> Result<Ranking> {
    let scores = mechanism_scores(dataset, weights, mechanism)?;
    ranking_from_scores(&scores, dataset.registry())
}
