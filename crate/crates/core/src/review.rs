//! The peer-review stage: build battle pairs from an answer set, assign
//! reviewers, and drive a judge (remote or synthetic) to assemble a review
//! dataset.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    Answer, ModelId, ModelRegistry, Outcome, Question, QuestionSet, ReviewDataset, ReviewRecord,
};
use crate::scalar::Real;

/// How battle pairs are drawn per question.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pairing {
    /// Every unordered pair of answering models.
    AllPairs,
    /// A seeded random subset of that many pairs per question.
    Sampled { pairs_per_question: usize },
}

/// Pair-construction strategy: the pairing itself plus a pair-level
/// subsampling fraction. Subsampling keeps whole pairs (with all their
/// reviewers) so a shrunken dataset stays coherent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairingStrategy<F: Real> {
    pub pairing: Pairing,
    pub data_fraction: F,
}

impl<F: Real> PairingStrategy<F> {
    pub fn all_pairs() -> Self {
        PairingStrategy {
            pairing: Pairing::AllPairs,
            data_fraction: F::one(),
        }
    }

    fn validate(&self) -> Result<()> {
        if let Pairing::Sampled { pairs_per_question } = self.pairing {
            if pairs_per_question == 0 {
                return Err(Error::Argument("pairs_per_question must be >= 1".into()));
            }
        }
        if !(self.data_fraction > F::zero() && self.data_fraction <= F::one()) {
            return Err(Error::Argument(format!(
                "data fraction must lie in (0, 1], got {}",
                self.data_fraction
            )));
        }
        Ok(())
    }
}

/// One battle: an ordered pair of contestants for a question. The member
/// order is already presentation-shuffled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BattlePair {
    pub question_id: u64,
    pub model_a: ModelId,
    pub model_b: ModelId,
}

// FNV-1a over stable tokens: gives every (seed, pair, reviewer) its own rng
// stream without depending on process-randomized hashing.
fn stable_seed(seed: u64, parts: &[&str]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in seed.to_le_bytes() {
        hash = (hash ^ byte as u64).wrapping_mul(0x0000_0100_0000_01b3);
    }
    for part in parts {
        for &byte in part.as_bytes() {
            hash = (hash ^ byte as u64).wrapping_mul(0x0000_0100_0000_01b3);
        }
        hash = (hash ^ 0x1f).wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Builds deduplicated battle pairs from an answer set. Questions with
/// fewer than two answers are skipped with a warning. All randomness (pair
/// sampling, subsampling, member-order shuffling) flows from `seed`, and the
/// output is independent of the input answer order.
pub fn build_pairs<F: Real>(
    answers: &[Answer],
    strategy: &PairingStrategy<F>,
    seed: u64,
) -> Result<Vec<BattlePair>> {
    strategy.validate()?;
    let mut by_question: BTreeMap<u64, BTreeSet<ModelId>> = BTreeMap::new();
    for a in answers {
        by_question
            .entry(a.question_id)
            .or_default()
            .insert(a.model.clone());
    }

    let mut pairs = Vec::new();
    for (question_id, models) in &by_question {
        if models.len() < 2 {
            log::warn!("question {question_id} has fewer than 2 answers; skipped");
            continue;
        }
        let models: Vec<&ModelId> = models.iter().collect();
        let mut candidates: Vec<(usize, usize)> = (0..models.len())
            .flat_map(|i| ((i + 1)..models.len()).map(move |j| (i, j)))
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(stable_seed(seed, &[&question_id.to_string()]));
        if let Pairing::Sampled { pairs_per_question } = strategy.pairing {
            if pairs_per_question < candidates.len() {
                candidates = rand::seq::index::sample(&mut rng, candidates.len(), pairs_per_question)
                    .into_iter()
                    .map(|i| candidates[i])
                    .collect();
            }
        }
        let keep = ((strategy.data_fraction.to_f64().unwrap() * candidates.len() as f64).floor()
            as usize)
            .max(1);
        if keep < candidates.len() {
            candidates = rand::seq::index::sample(&mut rng, candidates.len(), keep)
                .into_iter()
                .map(|i| candidates[i])
                .collect();
        }
        candidates.sort_unstable();

        for (i, j) in candidates {
            let (a, b) = if rng.random::<bool>() { (i, j) } else { (j, i) };
            pairs.push(BattlePair {
                question_id: *question_id,
                model_a: models[a].clone(),
                model_b: models[b].clone(),
            });
        }
    }
    Ok(pairs)
}

/// Samples `r` distinct reviewers for a pair, uniformly from the registry
/// minus the two contestants; `r` is clamped to `m - 2`. The draw is keyed
/// on `(seed, pair)`, so each pair gets its own reviewers while the whole
/// assignment stays reproducible.
pub fn assign_reviewers(
    pair: &BattlePair,
    registry: &ModelRegistry,
    r: usize,
    seed: u64,
) -> Result<Vec<ModelId>> {
    if registry.len() < 3 {
        return Err(Error::Argument(format!(
            "reviewer assignment needs at least 3 models, got {}",
            registry.len()
        )));
    }
    let pool: Vec<&ModelId> = registry
        .iter()
        .filter(|m| **m != pair.model_a && **m != pair.model_b)
        .collect();
    let r = r.min(pool.len());
    let mut rng = ChaCha8Rng::seed_from_u64(stable_seed(
        seed,
        &[
            &pair.question_id.to_string(),
            pair.model_a.as_str(),
            pair.model_b.as_str(),
        ],
    ));
    let mut chosen: Vec<ModelId> = rand::seq::index::sample(&mut rng, pool.len(), r)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect();
    chosen.sort();
    Ok(chosen)
}

/// Why a single judgment failed.
#[derive(Debug, Clone)]
pub enum JudgeFailure {
    /// The judge produced no usable verdict in either presentation order.
    InvalidVerdict(String),
    /// The endpoint could not be reached or kept failing after retries.
    Transport(String),
}

impl fmt::Display for JudgeFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JudgeFailure::InvalidVerdict(m) => write!(f, "invalid verdict: {m}"),
            JudgeFailure::Transport(m) => write!(f, "transport failure: {m}"),
        }
    }
}

/// Everything a judge needs to evaluate one battle for one reviewer.
#[derive(Debug)]
pub struct BattleTask<'a> {
    pub question: &'a Question,
    pub answer_a: &'a Answer,
    pub answer_b: &'a Answer,
    pub reviewer: &'a ModelId,
}

/// A pair judge: remote gateway or synthetic simulator. Implementations
/// must be safe to call from many threads at once.
pub trait PairJudge: Sync {
    fn judge_pair(&self, task: &BattleTask<'_>) -> std::result::Result<Outcome, JudgeFailure>;
}

/// Collection parameters.
#[derive(Debug, Clone)]
pub struct CollectOptions {
    /// Reviewers per pair (clamped to `m - 2`).
    pub reviewers_per_pair: usize,
    pub seed: u64,
    /// Worker threads; the in-flight judgment cap.
    pub concurrency: usize,
    /// Additionally let both contestants review their own battle
    /// (bias studies only).
    pub allow_self_review: bool,
}

impl Default for CollectOptions {
    fn default() -> Self {
        CollectOptions {
            reviewers_per_pair: 5,
            seed: 0,
            concurrency: 4,
            allow_self_review: false,
        }
    }
}

/// Failure accounting for one collection run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CollectReport {
    pub requested: usize,
    pub collected: usize,
    pub invalid_verdicts: usize,
    pub transport_failures: usize,
    /// First few failure messages, for diagnostics.
    pub sample_failures: Vec<String>,
}

const REPORTED_FAILURES: usize = 20;

/// Fans judgments out over `options.concurrency` workers and assembles the
/// dataset as an order-independent reduction: results land in per-task
/// slots and records are sorted canonically, so the output is byte-stable
/// regardless of scheduling. Failed judgments are dropped and counted.
pub fn collect_reviews(
    pairs: &[BattlePair],
    questions: &QuestionSet,
    answers: &[Answer],
    judge: &dyn PairJudge,
    registry: &ModelRegistry,
    options: &CollectOptions,
) -> Result<(ReviewDataset, CollectReport)> {
    let answer_of: BTreeMap<(u64, &ModelId), &Answer> = answers
        .iter()
        .map(|a| ((a.question_id, &a.model), a))
        .collect();

    struct Task<'a> {
        question: &'a Question,
        answer_a: &'a Answer,
        answer_b: &'a Answer,
        reviewer: ModelId,
    }

    let mut tasks = Vec::new();
    for pair in pairs {
        let question = questions.get(pair.question_id).ok_or_else(|| {
            Error::Schema(format!("no question with id {} in the set", pair.question_id))
        })?;
        let answer_a = answer_of
            .get(&(pair.question_id, &pair.model_a))
            .ok_or_else(|| {
                Error::Schema(format!(
                    "no answer by {:?} for question {}",
                    pair.model_a, pair.question_id
                ))
            })?;
        let answer_b = answer_of
            .get(&(pair.question_id, &pair.model_b))
            .ok_or_else(|| {
                Error::Schema(format!(
                    "no answer by {:?} for question {}",
                    pair.model_b, pair.question_id
                ))
            })?;
        let mut reviewers =
            assign_reviewers(pair, registry, options.reviewers_per_pair, options.seed)?;
        if options.allow_self_review {
            reviewers.push(pair.model_a.clone());
            reviewers.push(pair.model_b.clone());
        }
        for reviewer in reviewers {
            tasks.push(Task {
                question,
                answer_a,
                answer_b,
                reviewer,
            });
        }
    }

    let workers = options.concurrency.max(1).min(tasks.len().max(1));
    let mut outcomes: Vec<Option<std::result::Result<Outcome, JudgeFailure>>> =
        Vec::with_capacity(tasks.len());
    outcomes.resize_with(tasks.len(), || None);

    std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(workers);
        for worker in 0..workers {
            let tasks = &tasks;
            let handle = scope.spawn(move || {
                let mut slot_results = Vec::new();
                let mut i = worker;
                while i < tasks.len() {
                    let t = &tasks[i];
                    let task = BattleTask {
                        question: t.question,
                        answer_a: t.answer_a,
                        answer_b: t.answer_b,
                        reviewer: &t.reviewer,
                    };
                    slot_results.push((i, judge.judge_pair(&task)));
                    i += workers;
                }
                slot_results
            });
            handles.push(handle);
        }
        for handle in handles {
            for (i, result) in handle.join().expect("judge worker panicked") {
                outcomes[i] = Some(result);
            }
        }
    });

    let mut report = CollectReport {
        requested: tasks.len(),
        ..CollectReport::default()
    };
    let mut records = Vec::new();
    for (task, outcome) in tasks.iter().zip(outcomes) {
        match outcome.expect("every task slot is filled") {
            Ok(outcome) => {
                records.push(ReviewRecord {
                    question_id: task.question.question_id,
                    model_a: task.answer_a.model.clone(),
                    model_b: task.answer_b.model.clone(),
                    outcome,
                    reviewer: task.reviewer.clone(),
                });
                report.collected += 1;
            }
            Err(failure) => {
                match failure {
                    JudgeFailure::InvalidVerdict(_) => report.invalid_verdicts += 1,
                    JudgeFailure::Transport(_) => report.transport_failures += 1,
                }
                if report.sample_failures.len() < REPORTED_FAILURES {
                    report.sample_failures.push(failure.to_string());
                }
                log::warn!(
                    "dropping judgment of ({:?}, {:?}) on question {} by {:?}: {failure}",
                    task.answer_a.model,
                    task.answer_b.model,
                    task.question.question_id,
                    task.reviewer
                );
            }
        }
    }

    let mut dataset = if options.allow_self_review {
        ReviewDataset::new_with_self_reviews(records, registry.clone())?
    } else {
        ReviewDataset::new(records, registry.clone())?
    };
    dataset.sort_canonical();
    Ok((dataset, report))
}

pub(crate) fn task_seed(seed: u64, question_id: u64, a: &ModelId, b: &ModelId, reviewer: &ModelId) -> u64 {
    stable_seed(
        seed,
        &[&question_id.to_string(), a.as_str(), b.as_str(), reviewer.as_str()],
    )
}
