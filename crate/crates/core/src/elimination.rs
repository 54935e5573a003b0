//! Unsupervised reviewer elimination.
//!
//! Weak reviewers add noise to the peer-review system, so the engine
//! iteratively drops the lowest-scoring model from the reviewer pool and
//! re-optimizes the remaining weights. Eliminated models keep being scored
//! as contestants; only their judgments stop counting. The threshold is
//! either a fixed fraction of the pool or learned automatically as the
//! elimination count that minimizes the final consistency loss.

use std::collections::BTreeSet;

use crate::consistency::{optimize_weights_restricted, OptConfig};
use crate::error::{Error, Result};
use crate::model::{
    ranking_from_scores, ConfidenceWeights, ModelId, Ranking, ReviewDataset, ScoreVector,
};
use crate::scalar::Real;
use crate::scoring::mechanism_scores;

/// How many reviewers to eliminate.
#[derive(Debug, Clone, PartialEq)]
pub enum EliminationMode<F: Real> {
    /// Eliminate `ceil(fraction * m)` reviewers (0.6 by default).
    Fixed { fraction: F },
    /// Run the trajectory down to 3 active reviewers, then keep the prefix
    /// whose final loss is smallest.
    Auto,
}

impl<F: Real> EliminationMode<F> {
    pub fn fixed_default() -> Self {
        EliminationMode::Fixed {
            fraction: F::from_f64_lossy(0.6),
        }
    }
}

/// Elimination parameters: the mode plus the per-round optimization config.
#[derive(Debug, Clone, PartialEq)]
pub struct EliminationConfig<F: Real> {
    pub mode: EliminationMode<F>,
    pub opt: OptConfig<F>,
}

/// Result of one optimization round: learned weights over the active set,
/// mechanism scores for every registry model, and the final loss
/// (`1 - objective`).
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome<F: Real> {
    pub weights: ConfidenceWeights<F>,
    pub scores: ScoreVector<F>,
    pub final_loss: F,
}

/// Elimination bookkeeping. `per_round[e]` is the optimization outcome with
/// exactly `e` reviewers eliminated; `eliminated` lists victims in order.
#[derive(Debug, Clone, PartialEq)]
pub struct EliminationState<F: Real> {
    pub active: BTreeSet<ModelId>,
    pub eliminated: Vec<ModelId>,
    pub per_round: Vec<RoundOutcome<F>>,
    /// Index into `per_round` of the round the final ranking is taken from.
    pub selected_round: usize,
}

impl<F: Real> EliminationState<F> {
    fn initial(dataset: &ReviewDataset) -> Self {
        EliminationState {
            active: dataset.registry().iter().cloned().collect(),
            eliminated: Vec::new(),
            per_round: Vec::new(),
            selected_round: 0,
        }
    }

    /// Final losses indexed by number eliminated.
    pub fn losses(&self) -> Vec<F> {
        self.per_round.iter().map(|r| r.final_loss).collect()
    }
}

fn run_round<F: Real>(
    state: &EliminationState<F>,
    dataset: &ReviewDataset,
    cfg: &EliminationConfig<F>,
) -> Result<RoundOutcome<F>> {
    let (weights, trace) = optimize_weights_restricted(dataset, &state.active, &cfg.opt)?;
    let filtered = dataset.filter_reviewers(&state.active);
    let scores = mechanism_scores(&filtered, &weights, &cfg.opt.mechanism)?;
    Ok(RoundOutcome {
        weights,
        scores,
        final_loss: trace.final_loss(),
    })
}

/// One elimination step: optimize over the current active reviewers, score
/// every registry model, and move the lowest-scoring active model (ties
/// broken toward the ascending id) into the eliminated list.
pub fn eliminate_step<F: Real>(
    mut state: EliminationState<F>,
    dataset: &ReviewDataset,
    cfg: &EliminationConfig<F>,
) -> Result<EliminationState<F>> {
    if state.active.len() < 3 {
        return Err(Error::CannotEliminate(format!(
            "only {} active reviewers left, need at least 3",
            state.active.len()
        )));
    }
    let round = run_round(&state, dataset, cfg)?;
    let victim = lowest_scoring(&state.active, &round.scores).clone();

    state.per_round.push(round);
    state.active.remove(&victim);
    state.eliminated.push(victim);
    state.selected_round = state.per_round.len() - 1;
    Ok(state)
}

// BTreeSet iterates in ascending id order, so a strict comparison keeps the
// first (smallest id) of any score tie.
fn lowest_scoring<'a, F: Real>(active: &'a BTreeSet<ModelId>, scores: &ScoreVector<F>) -> &'a ModelId {
    let mut victim: Option<(&ModelId, F)> = None;
    for id in active {
        let score = scores.get(id).expect("every registry model is scored");
        match victim {
            Some((_, best)) if score >= best => {}
            _ => victim = Some((id, score)),
        }
    }
    victim.expect("active set is non-empty").0
}

/// Index of the minimum final loss, ties resolved toward fewer eliminations.
pub fn auto_threshold<F: Real>(per_round_losses: &[F]) -> usize {
    let mut best = 0;
    for (i, &loss) in per_round_losses.iter().enumerate() {
        if loss < per_round_losses[best] {
            best = i;
        }
    }
    best
}

/// Runs the full elimination loop and returns the final ranking over all
/// registry models together with the trajectory.
///
/// Fixed mode eliminates `ceil(fraction * m)` reviewers (clamped so at least
/// two stay active) and ranks from the last completed round. Auto mode runs
/// the whole trajectory down to 3 active reviewers, then selects the
/// loss-minimizing prefix.
pub fn run_elimination<F: Real>(
    dataset: &ReviewDataset,
    cfg: &EliminationConfig<F>,
) -> Result<(Ranking, EliminationState<F>)> {
    let m = dataset.registry().len();
    let mut state = EliminationState::initial(dataset);

    let target = match &cfg.mode {
        EliminationMode::Fixed { fraction } => {
            let f = fraction.to_f64().unwrap();
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Argument(format!(
                    "elimination fraction must lie in [0, 1], got {f}"
                )));
            }
            let requested = (f * m as f64).ceil() as usize;
            let max_possible = m.saturating_sub(2);
            if requested > max_possible {
                log::warn!(
                    "clamping elimination count from {requested} to {max_possible} \
                     (pool of {m} cannot drop below 2 active reviewers)"
                );
            }
            requested.min(max_possible)
        }
        // Full trajectory down to 3 active reviewers.
        EliminationMode::Auto => m.saturating_sub(3),
    };

    for _ in 0..target {
        state = eliminate_step(state, dataset, cfg)?;
    }
    // Post-elimination round, so per_round[e] exists for e = target as well.
    // Skipped only when the pool is too small to optimize again.
    if state.active.len() >= 3 {
        let round = run_round(&state, dataset, cfg)?;
        state.per_round.push(round);
        state.selected_round = state.per_round.len() - 1;
    }

    if let EliminationMode::Auto = cfg.mode {
        let chosen = auto_threshold(&state.losses());
        state.selected_round = chosen;
        // Re-admit everything after the chosen prefix.
        for id in state.eliminated.split_off(chosen) {
            state.active.insert(id);
        }
    }

    let ranking = ranking_from_scores(
        &state.per_round[state.selected_round].scores,
        dataset.registry(),
    )?;
    Ok((ranking, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelRegistry, Outcome, ReviewRecord};
    use crate::sim::{simulate_dataset, SimConfig};

    fn id(s: &str) -> ModelId {
        ModelId::new(s).unwrap()
    }

    fn cfg(seed: u64) -> EliminationConfig<f64> {
        EliminationConfig {
            mode: EliminationMode::fixed_default(),
            opt: OptConfig::new(seed),
        }
    }

    fn sim_dataset(m: usize, n: usize, seed: u64) -> ReviewDataset {
        let mut c: SimConfig<f64> = SimConfig::new(m, n, seed);
        c.reviewers_per_pair = 3;
        c.quality_noise = 0.3;
        c.judge_sharpness = 0.4;
        simulate_dataset(&c).unwrap().0
    }

    #[test]
    fn step_eliminates_the_lowest_scoring_active_model() {
        let ds = sim_dataset(6, 6, 5);
        let state = EliminationState::initial(&ds);
        let next = eliminate_step(state, &ds, &cfg(3)).unwrap();
        assert_eq!(next.eliminated.len(), 1);
        assert_eq!(next.per_round.len(), 1);
        let round = &next.per_round[0];
        let victim = &next.eliminated[0];
        let victim_score = round.scores.get(victim).unwrap();
        for m in &next.active {
            assert!(round.scores.get(m).unwrap() >= victim_score);
        }
    }

    #[test]
    fn score_ties_eliminate_the_ascending_id() {
        let reg = ModelRegistry::from_names(["b", "a", "c", "d"]).unwrap();
        let scores: crate::model::ScoreVector<f64> = crate::model::ScoreVector::new(
            [(id("a"), 1.0), (id("b"), 1.0), (id("c"), 5.0), (id("d"), 3.0)].into(),
        )
        .unwrap();
        let active: BTreeSet<ModelId> = reg.iter().cloned().collect();
        assert_eq!(lowest_scoring(&active, &scores), &id("a"));
        // With "a" gone the tie no longer exists.
        let rest: BTreeSet<ModelId> = [id("b"), id("c"), id("d")].into();
        assert_eq!(lowest_scoring(&rest, &scores), &id("b"));
    }

    #[test]
    fn anti_consistent_data_still_eliminates() {
        // Every pair ties, so each model's score is an affine function of
        // the other reviewers' weights: the objective is exactly -1 for any
        // weight vector, and the lowest-scoring model is the one with the
        // highest learned weight.
        let reg = ModelRegistry::from_names(["a", "b", "c", "d"]).unwrap();
        let names = ["a", "b", "c", "d"];
        let mut records = Vec::new();
        for q in 0..6u64 {
            for i in 0..4usize {
                for j in (i + 1)..4 {
                    for s in 0..4usize {
                        if s != i && s != j {
                            records.push(ReviewRecord {
                                question_id: q,
                                model_a: id(names[i]),
                                model_b: id(names[j]),
                                outcome: Outcome::Tie,
                                reviewer: id(names[s]),
                            });
                        }
                    }
                }
            }
        }
        let ds = ReviewDataset::new(records, reg).unwrap();
        let next = eliminate_step(EliminationState::initial(&ds), &ds, &cfg(1)).unwrap();
        assert_eq!(next.eliminated.len(), 1);
        let round = &next.per_round[0];
        // Objective pinned at -1: loss = 1 - (-1) = 2.
        approx::assert_abs_diff_eq!(round.final_loss, 2.0, epsilon = 1e-9);
        // Victim holds the largest weight (scores decrease in own weight).
        let victim = &next.eliminated[0];
        let victim_weight = round.weights.get(victim).unwrap();
        for (_, w) in round.weights.iter() {
            assert!(w <= victim_weight + 1e-12);
        }
    }

    #[test]
    fn step_requires_three_active_models() {
        let ds = sim_dataset(5, 4, 6);
        let mut state = EliminationState::initial(&ds);
        state.active = state.active.into_iter().take(2).collect();
        assert!(matches!(
            eliminate_step(state, &ds, &cfg(0)),
            Err(Error::CannotEliminate(_))
        ));
    }

    #[test]
    fn fixed_mode_eliminates_sixty_percent() {
        let ds = sim_dataset(10, 5, 7);
        let (ranking, state) = run_elimination(&ds, &cfg(4)).unwrap();
        assert_eq!(state.eliminated.len(), 6);
        assert_eq!(state.active.len(), 4);
        // One entry per elimination plus the initial round.
        assert_eq!(state.per_round.len(), 7);
        // Eliminated models are still ranked.
        assert_eq!(ranking.len(), 10);
        for e in &state.eliminated {
            assert!(ranking.rank_of(e).is_some());
        }
    }

    #[test]
    fn fixed_mode_small_pool_clamps_to_floor() {
        let ds = sim_dataset(5, 5, 8);
        let (ranking, state) = run_elimination(&ds, &cfg(2)).unwrap();
        // ceil(0.6 * 5) = 3 eliminations leave 2 active; the post-round
        // optimization is skipped because only 2 reviewers remain.
        assert_eq!(state.eliminated.len(), 3);
        assert_eq!(state.active.len(), 2);
        assert_eq!(state.per_round.len(), 3);
        assert_eq!(ranking.len(), 5);
    }

    #[test]
    fn rounds_use_monotonically_shrinking_record_sets() {
        let ds = sim_dataset(7, 5, 9);
        let (_, state) = run_elimination(&ds, &cfg(5)).unwrap();
        let mut active: BTreeSet<ModelId> = ds.registry().iter().cloned().collect();
        let mut sizes = vec![ds.filter_reviewers(&active).len()];
        for victim in &state.eliminated {
            active.remove(victim);
            sizes.push(ds.filter_reviewers(&active).len());
        }
        for pair in sizes.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
    }

    #[test]
    fn auto_threshold_picks_minimum_with_ties_toward_fewer() {
        assert_eq!(auto_threshold(&[0.5, 0.4, 0.3, 0.35]), 2);
        assert_eq!(auto_threshold(&[0.5, 0.4, 0.3, 0.2]), 3);
        assert_eq!(auto_threshold(&[0.3, 0.3]), 0);
        assert_eq!(auto_threshold(&[0.7]), 0);
    }

    #[test]
    fn auto_mode_state_matches_selected_prefix() {
        let mut c: SimConfig<f64> = SimConfig::new(9, 6, 11);
        c.reviewers_per_pair = 3;
        c.quality_noise = 0.4;
        c.zero_ability_fraction = 0.4;
        let (ds, _) = simulate_dataset(&c).unwrap();
        let cfg: EliminationConfig<f64> = EliminationConfig {
            mode: EliminationMode::Auto,
            opt: OptConfig::new(13),
        };
        let (ranking, state) = run_elimination(&ds, &cfg).unwrap();
        // Trajectory runs down to 3 active: m - 3 eliminations plus the
        // initial round.
        assert_eq!(state.per_round.len(), 9 - 3 + 1);
        assert_eq!(state.selected_round, auto_threshold(&state.losses()));
        assert_eq!(state.eliminated.len(), state.selected_round);
        assert_eq!(state.active.len() + state.eliminated.len(), 9);
        assert_eq!(ranking.len(), 9);
    }

    #[test]
    fn noise_judges_fall_to_the_auto_threshold() {
        // 40% of the pool has zero ability: their verdicts are coin flips
        // and their answers are the worst, so elimination should sweep most
        // of them up. Statistical check over a few seeds.
        let mut hits = 0;
        let seeds = [1u64, 2, 3, 4, 5, 6];
        for &seed in &seeds {
            let mut c: SimConfig<f64> = SimConfig::new(10, 8, seed);
            c.reviewers_per_pair = 4;
            c.quality_noise = 0.25;
            c.judge_sharpness = 0.4;
            c.zero_ability_fraction = 0.4;
            let population = crate::sim::gen_population(&c).unwrap();
            let noise: BTreeSet<ModelId> = population
                .iter()
                .filter(|m| m.ability == 0.0)
                .map(|m| m.id.clone())
                .collect();
            let (ds, _) = simulate_dataset(&c).unwrap();
            let cfg: EliminationConfig<f64> = EliminationConfig {
                mode: EliminationMode::Auto,
                opt: OptConfig::new(seed + 100),
            };
            let (_, state) = run_elimination(&ds, &cfg).unwrap();
            let caught = state.eliminated.iter().filter(|e| noise.contains(*e)).count();
            if caught * 2 >= noise.len() {
                hits += 1;
            }
        }
        assert!(hits >= 4, "noise judges eliminated in only {hits}/6 seeds");
    }

    #[test]
    fn elimination_is_deterministic() {
        let ds = sim_dataset(8, 6, 13);
        let (r1, s1) = run_elimination(&ds, &cfg(17)).unwrap();
        let (r2, s2) = run_elimination(&ds, &cfg(17)).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(s1.eliminated, s2.eliminated);
        assert_eq!(s1.losses(), s2.losses());
    }
}
