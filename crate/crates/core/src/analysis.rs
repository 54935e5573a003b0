//! Reviewer-bias analysis and the wisdom-of-crowds baselines.
//!
//! The preference gap compares how often reviewer `i` declares itself the
//! winner against `j` with how often reviewer `j` concedes that result;
//! re-weighting it by learned confidence weights shrinks the gaps of
//! self-favoring reviewers. Majority and rating voting are the unweighted
//! baselines the engine is measured against.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{ConfidenceWeights, ModelId, Outcome, ReviewDataset, ScoreVector};
use crate::scalar::Real;

/// Pairwise reviewer-bias values. `pg[(i, j)]` is present only when both
/// reviewers have at least one supporting record for the pair `{i, j}`;
/// unsupported ordered pairs are listed in `missing`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceGapMatrix<F: Real> {
    pub pg: BTreeMap<(ModelId, ModelId), F>,
    /// Supporting sample sizes: records of `{i, j}` reviewed by `i` plus
    /// records reviewed by `j`.
    pub counts: BTreeMap<(ModelId, ModelId), usize>,
    /// Ordered pairs lacking support on at least one side.
    pub missing: Vec<(ModelId, ModelId)>,
}

/// Win-rate tallies for one (reviewer, pair) cell.
#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    credit: f64,
    total: usize,
}

/// `P_s(s > opponent)` tallies. Ties count as half a win.
fn self_win_rates(dataset: &ReviewDataset) -> BTreeMap<(ModelId, ModelId), Tally> {
    // Keyed by (reviewer-contestant, opponent); only records where the
    // reviewer is itself one of the contestants carry information here.
    let mut rates: BTreeMap<(ModelId, ModelId), Tally> = BTreeMap::new();
    for r in dataset.records() {
        let (own, opponent, own_credit) = if r.reviewer == r.model_a {
            (
                r.model_a.clone(),
                r.model_b.clone(),
                match r.outcome {
                    Outcome::FirstWins => 1.0,
                    Outcome::Tie => 0.5,
                    Outcome::SecondWins => 0.0,
                },
            )
        } else if r.reviewer == r.model_b {
            (
                r.model_b.clone(),
                r.model_a.clone(),
                match r.outcome {
                    Outcome::SecondWins => 1.0,
                    Outcome::Tie => 0.5,
                    Outcome::FirstWins => 0.0,
                },
            )
        } else {
            continue;
        };
        let entry = rates.entry((own, opponent)).or_default();
        entry.credit += own_credit;
        entry.total += 1;
    }
    rates
}

fn gap_matrix<F: Real>(
    dataset: &ReviewDataset,
    weight_of: impl Fn(&ModelId) -> Result<F>,
) -> Result<PreferenceGapMatrix<F>> {
    let rates = self_win_rates(dataset);
    let mut pg = BTreeMap::new();
    let mut counts = BTreeMap::new();
    let mut missing = Vec::new();
    for i in dataset.registry().iter() {
        for j in dataset.registry().iter() {
            if i == j {
                continue;
            }
            let p_i = rates.get(&(i.clone(), j.clone()));
            let p_j = rates.get(&(j.clone(), i.clone()));
            match (p_i, p_j) {
                (Some(ti), Some(tj)) => {
                    // P_i(i>j) from reviewer i's own battles, and P_j(i>j)
                    // as the complement of reviewer j's self-win rate.
                    let p_i_wins_by_i = ti.credit / ti.total as f64;
                    let p_i_wins_by_j = 1.0 - tj.credit / tj.total as f64;
                    let value = weight_of(i)?.to_f64().unwrap() * p_i_wins_by_i
                        - weight_of(j)?.to_f64().unwrap() * p_i_wins_by_j;
                    pg.insert((i.clone(), j.clone()), F::from_f64_lossy(value));
                    counts.insert((i.clone(), j.clone()), ti.total + tj.total);
                }
                _ => missing.push((i.clone(), j.clone())),
            }
        }
    }
    Ok(PreferenceGapMatrix { pg, counts, missing })
}

/// Unweighted preference gaps, `PG(i, j) = P_i(i > j) - P_j(i > j)`.
///
/// Requires records where a contestant also reviewed its own battle, i.e. a
/// dataset collected with self-reviews allowed. With ties counted as half a
/// win the matrix is symmetric: `PG(i, j) = PG(j, i)`.
pub fn preference_gap_matrix<F: Real>(dataset: &ReviewDataset) -> Result<PreferenceGapMatrix<F>> {
    gap_matrix(dataset, |_| Ok(F::one()))
}

/// Confidence-weighted preference gaps,
/// `PG(i, j) = w_i * P_i(i > j) - w_j * P_j(i > j)`.
pub fn reweighted_pg_matrix<F: Real>(
    dataset: &ReviewDataset,
    weights: &ConfidenceWeights<F>,
) -> Result<PreferenceGapMatrix<F>> {
    gap_matrix(dataset, |id| {
        weights
            .get(id)
            .ok_or_else(|| Error::Schema(format!("no confidence weight for model {id:?}")))
    })
}

/// Majority voting: per (question, pair), the contestant with the plurality
/// of win votes gains one point; deadlocks split the point.
pub fn majority_voting<F: Real>(dataset: &ReviewDataset) -> Result<ScoreVector<F>> {
    let mut votes: BTreeMap<(u64, ModelId, ModelId), (usize, usize)> = BTreeMap::new();
    for r in dataset.records() {
        // Canonical pair orientation so both presentations tally together.
        let (first, second, swapped) = if r.model_a <= r.model_b {
            (r.model_a.clone(), r.model_b.clone(), false)
        } else {
            (r.model_b.clone(), r.model_a.clone(), true)
        };
        let entry = votes.entry((r.question_id, first, second)).or_default();
        match (r.outcome, swapped) {
            (Outcome::FirstWins, false) | (Outcome::SecondWins, true) => entry.0 += 1,
            (Outcome::SecondWins, false) | (Outcome::FirstWins, true) => entry.1 += 1,
            (Outcome::Tie, _) => {}
        }
    }
    let mut scores: BTreeMap<ModelId, F> = dataset
        .registry()
        .iter()
        .map(|id| (id.clone(), F::zero()))
        .collect();
    let half = F::from_f64_lossy(0.5);
    for ((_, first, second), (wins_first, wins_second)) in votes {
        match wins_first.cmp(&wins_second) {
            std::cmp::Ordering::Greater => *scores.get_mut(&first).unwrap() += F::one(),
            std::cmp::Ordering::Less => *scores.get_mut(&second).unwrap() += F::one(),
            std::cmp::Ordering::Equal => {
                *scores.get_mut(&first).unwrap() += half;
                *scores.get_mut(&second).unwrap() += half;
            }
        }
    }
    ScoreVector::new(scores)
}

/// Rating voting: every individual win vote adds one point, every tie half a
/// point to both contestants. Identical to plain weighted scoring with unit
/// weights.
pub fn rating_voting<F: Real>(dataset: &ReviewDataset) -> Result<ScoreVector<F>> {
    crate::scoring::weighted_scores(
        dataset,
        &ConfidenceWeights::uniform(dataset.registry()),
        F::from_f64_lossy(0.5),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelRegistry, ReviewRecord};
    use approx::assert_abs_diff_eq;

    fn id(s: &str) -> ModelId {
        ModelId::new(s).unwrap()
    }

    fn record(q: u64, a: &str, b: &str, outcome: Outcome, reviewer: &str) -> ReviewRecord {
        ReviewRecord {
            question_id: q,
            model_a: id(a),
            model_b: id(b),
            outcome,
            reviewer: id(reviewer),
        }
    }

    fn registry() -> ModelRegistry {
        ModelRegistry::from_names(["i", "j", "k"]).unwrap()
    }

    fn self_favoring_dataset() -> ReviewDataset {
        // Reviewer i always scores i the winner; reviewer j always scores j.
        ReviewDataset::new_with_self_reviews(
            vec![
                record(1, "i", "j", Outcome::FirstWins, "i"),
                record(2, "i", "j", Outcome::FirstWins, "i"),
                record(1, "i", "j", Outcome::SecondWins, "j"),
                record(2, "j", "i", Outcome::FirstWins, "j"),
            ],
            registry(),
        )
        .unwrap()
    }

    #[test]
    fn opposed_self_favoring_reviewers_hit_the_maximum_gap() {
        // P_i(i>j) = 1 and P_j(i>j) = 0, so PG(i,j) = 1.
        let pg = preference_gap_matrix::<f64>(&self_favoring_dataset()).unwrap();
        assert_abs_diff_eq!(pg.pg[&(id("i"), id("j"))], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn agreeing_reviewers_have_zero_gap() {
        // Both reviewers report the same i-over-j rate.
        let ds = ReviewDataset::new_with_self_reviews(
            vec![
                record(1, "i", "j", Outcome::FirstWins, "i"),
                record(2, "i", "j", Outcome::SecondWins, "i"),
                record(1, "i", "j", Outcome::FirstWins, "j"),
                record(2, "i", "j", Outcome::SecondWins, "j"),
            ],
            registry(),
        )
        .unwrap();
        let pg = preference_gap_matrix::<f64>(&ds).unwrap();
        assert_abs_diff_eq!(pg.pg[&(id("i"), id("j"))], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn unweighted_gap_is_symmetric_and_diagonal_absent() {
        let pg = preference_gap_matrix::<f64>(&self_favoring_dataset()).unwrap();
        for ((i, j), v) in &pg.pg {
            assert_ne!(i, j);
            assert_abs_diff_eq!(*v, pg.pg[&(j.clone(), i.clone())], epsilon = 1e-12);
        }
    }

    #[test]
    fn unsupported_pairs_are_reported_not_fabricated() {
        let pg = preference_gap_matrix::<f64>(&self_favoring_dataset()).unwrap();
        // k never reviews its own battles, so every pair involving k is
        // unsupported.
        assert!(pg.missing.iter().any(|(a, b)| a == &id("k") || b == &id("k")));
        assert!(!pg.pg.contains_key(&(id("i"), id("k"))));
    }

    #[test]
    fn reweighted_gap_hand_case() {
        // P_i = 0.9, P_j = 0.5, w_i = 0.5, w_j = 1.0 gives 0.45 - 0.5.
        let mut records = Vec::new();
        for q in 0..10u64 {
            // Reviewer i: 9 self-wins, 1 loss.
            let outcome = if q < 9 { Outcome::FirstWins } else { Outcome::SecondWins };
            records.push(record(q, "i", "j", outcome, "i"));
        }
        for q in 0..10u64 {
            // Reviewer j sees it even: P_j(j>i) = 0.5, so P_j(i>j) = 0.5.
            let outcome = if q < 5 { Outcome::FirstWins } else { Outcome::SecondWins };
            records.push(record(q, "i", "j", outcome, "j"));
        }
        let ds = ReviewDataset::new_with_self_reviews(records, registry()).unwrap();
        let weights =
            ConfidenceWeights::new([(id("i"), 0.5), (id("j"), 1.0), (id("k"), 1.0)].into()).unwrap();
        let pg = reweighted_pg_matrix(&ds, &weights).unwrap();
        assert_abs_diff_eq!(pg.pg[&(id("i"), id("j"))], -0.05, epsilon = 1e-12);

        // Unit weights reduce to the plain matrix.
        let unit = ConfidenceWeights::uniform(ds.registry());
        let plain = preference_gap_matrix::<f64>(&ds).unwrap();
        let reweighted = reweighted_pg_matrix(&ds, &unit).unwrap();
        assert_eq!(plain.pg, reweighted.pg);
    }

    #[test]
    fn reweighting_shrinks_a_self_favoring_gap_linearly() {
        let ds = self_favoring_dataset();
        let weights =
            ConfidenceWeights::new([(id("i"), 0.1), (id("j"), 1.0), (id("k"), 1.0)].into()).unwrap();
        let pg = reweighted_pg_matrix(&ds, &weights).unwrap();
        // w_i * 1.0 - w_j * 0.0 = 0.1.
        assert_abs_diff_eq!(pg.pg[&(id("i"), id("j"))], 0.1, epsilon = 1e-12);
    }

    #[test]
    fn majority_voting_plurality_and_split() {
        let reg = ModelRegistry::from_names(["a", "b", "r1", "r2", "r3", "r4", "r5"]).unwrap();
        // 3-2 for a.
        let ds = ReviewDataset::new(
            vec![
                record(1, "a", "b", Outcome::FirstWins, "r1"),
                record(1, "a", "b", Outcome::FirstWins, "r2"),
                record(1, "b", "a", Outcome::SecondWins, "r3"),
                record(1, "a", "b", Outcome::SecondWins, "r4"),
                record(1, "a", "b", Outcome::SecondWins, "r5"),
            ],
            reg.clone(),
        )
        .unwrap();
        let scores = majority_voting::<f64>(&ds).unwrap();
        assert_abs_diff_eq!(scores.get(&id("a")).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(scores.get(&id("b")).unwrap(), 0.0, epsilon = 1e-12);

        // 2-2 with one tie vote: no plurality, half each.
        let ds = ReviewDataset::new(
            vec![
                record(2, "a", "b", Outcome::FirstWins, "r1"),
                record(2, "a", "b", Outcome::FirstWins, "r2"),
                record(2, "a", "b", Outcome::SecondWins, "r3"),
                record(2, "a", "b", Outcome::SecondWins, "r4"),
                record(2, "a", "b", Outcome::Tie, "r5"),
            ],
            reg,
        )
        .unwrap();
        let scores = majority_voting::<f64>(&ds).unwrap();
        assert_abs_diff_eq!(scores.get(&id("a")).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(scores.get(&id("b")).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn majority_voting_empty_dataset_is_all_zero() {
        let reg = registry();
        let ds = ReviewDataset::new(vec![], reg).unwrap();
        let scores = majority_voting::<f64>(&ds).unwrap();
        assert!(scores.iter().all(|(_, s)| s == 0.0));
    }

    #[test]
    fn rating_voting_counts_votes() {
        let reg = ModelRegistry::from_names(["a", "b", "c", "r"]).unwrap();
        let ds = ReviewDataset::new(
            vec![
                record(1, "a", "b", Outcome::FirstWins, "r"),
                record(2, "a", "b", Outcome::FirstWins, "c"),
                record(3, "a", "c", Outcome::Tie, "r"),
            ],
            reg,
        )
        .unwrap();
        let scores = rating_voting::<f64>(&ds).unwrap();
        assert_abs_diff_eq!(scores.get(&id("a")).unwrap(), 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(scores.get(&id("c")).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn rating_voting_equals_unit_weighted_scores_exactly() {
        use rand::{Rng, SeedableRng};
        let reg = ModelRegistry::from_names(["a", "b", "c", "d", "e"]).unwrap();
        let names = ["a", "b", "c", "d", "e"];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut records = Vec::new();
        for q in 0..200u64 {
            let mut picks: Vec<usize> = (0..5).collect();
            rand::seq::SliceRandom::shuffle(&mut picks[..], &mut rng);
            let outcome = match rng.random_range(0..3) {
                0 => Outcome::FirstWins,
                1 => Outcome::SecondWins,
                _ => Outcome::Tie,
            };
            records.push(record(q, names[picks[0]], names[picks[1]], outcome, names[picks[2]]));
        }
        let ds = ReviewDataset::new(records, reg.clone()).unwrap();
        let voting = rating_voting::<f64>(&ds).unwrap();
        let weighted = crate::scoring::weighted_scores(
            &ds,
            &ConfidenceWeights::uniform(&reg),
            0.5,
        )
        .unwrap();
        assert_eq!(voting, weighted);
    }
}
