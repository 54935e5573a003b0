//! Confidence-weight learning by consistency maximization.
//!
//! The objective is the Pearson correlation between the reviewers' confidence
//! weights and the response scores those weights induce. Weights live in
//! `(0, 1)` through a logistic reparameterization and are learned by
//! first-order gradient ascent: analytically for the plain mechanism (scores
//! are linear in the weights) and by central finite differences for the Elo
//! and Rank mechanisms.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{ConfidenceWeights, ModelId, Outcome, ReviewDataset};
use crate::scalar::Real;
use crate::scoring::{mechanism_scores, ScoringMechanism};

/// Optimization parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptConfig<F: Real> {
    pub step_size: F,
    pub max_iters: usize,
    pub rel_tol: F,
    pub seed: u64,
    pub mechanism: ScoringMechanism<F>,
}

impl<F: Real> OptConfig<F> {
    /// Defaults: step 0.05, at most 1000 iterations, relative tolerance
    /// 1e-6, plain scoring.
    pub fn new(seed: u64) -> Self {
        OptConfig {
            step_size: F::from_f64_lossy(0.05),
            max_iters: 1000,
            rel_tol: F::from_f64_lossy(1e-6),
            seed,
            mechanism: ScoringMechanism::plain(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.step_size > F::zero()) {
            return Err(Error::Argument(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Argument("max_iters must be >= 1".into()));
        }
        if !(self.rel_tol > F::zero()) {
            return Err(Error::Argument(format!(
                "relative tolerance must be positive, got {}",
                self.rel_tol
            )));
        }
        Ok(())
    }
}

/// Objective trajectory of one optimization run. `objective[0]` is the value
/// at initialization; one entry follows per accepted iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct OptTrace<F: Real> {
    pub objective: Vec<F>,
    pub converged: bool,
}

impl<F: Real> OptTrace<F> {
    pub fn final_objective(&self) -> F {
        *self.objective.last().expect("trace records at least the initial value")
    }

    /// Loss form of the trace, `1 - objective`, matching the convention that
    /// training curves decrease.
    pub fn losses(&self) -> Vec<F> {
        self.objective.iter().map(|&o| F::one() - o).collect()
    }

    pub fn final_loss(&self) -> F {
        F::one() - self.final_objective()
    }
}

/// Product-moment correlation of two equal-length sequences.
pub fn pearson<F: Real>(x: &[F], y: &[F]) -> Result<F> {
    if x.len() != y.len() {
        return Err(Error::Argument(format!(
            "sequences differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Argument(format!(
            "correlation needs at least 2 points, got {}",
            x.len()
        )));
    }
    let n = F::from_usize(x.len()).unwrap();
    let mean_x = x.iter().copied().sum::<F>() / n;
    let mean_y = y.iter().copied().sum::<F>() / n;
    let mut sxy = F::zero();
    let mut sxx = F::zero();
    let mut syy = F::zero();
    for (&a, &b) in x.iter().zip(y) {
        let u = a - mean_x;
        let v = b - mean_y;
        sxy += u * v;
        sxx += u * u;
        syy += v * v;
    }
    if sxx == F::zero() || syy == F::zero() {
        return Err(Error::Degenerate(
            "correlation undefined for a zero-variance sequence".into(),
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

fn check_active(dataset: &ReviewDataset, active: &BTreeSet<ModelId>) -> Result<()> {
    for id in active {
        if !dataset.registry().contains(id) {
            return Err(Error::Schema(format!("active model {id:?} not in registry")));
        }
    }
    Ok(())
}

/// Consistency objective: Pearson correlation between the active reviewers'
/// weights and the scores the chosen mechanism assigns them, computed over
/// records judged by active reviewers only. The active set is the weight
/// vector's domain.
pub fn objective<F: Real>(
    weights: &ConfidenceWeights<F>,
    dataset: &ReviewDataset,
    mechanism: &ScoringMechanism<F>,
) -> Result<F> {
    let active: BTreeSet<ModelId> = weights.model_ids().cloned().collect();
    check_active(dataset, &active)?;
    let filtered = dataset.filter_reviewers(&active);
    if filtered.is_empty() {
        return Err(Error::Degenerate(
            "no records from active reviewers; objective undefined".into(),
        ));
    }
    let scores = mechanism_scores(&filtered, weights, mechanism)?;
    let g: Vec<F> = active
        .iter()
        .map(|id| scores.get(id).expect("mechanism scores every registry model"))
        .collect();
    let w: Vec<F> = active.iter().map(|id| weights.get(id).unwrap()).collect();
    pearson(&g, &w)
}

/// Per-reviewer credit matrix for the plain mechanism: `credit[j][s]` is the
/// total credit model `j` earned from reviewer `s`'s records, so that
/// `G = credit * w`.
struct PlainCredit<F: Real> {
    credit: Vec<Vec<F>>,
    n: usize,
}

impl<F: Real> PlainCredit<F> {
    fn build(filtered: &ReviewDataset, active: &[ModelId], tie_credit: F) -> Self {
        let n = active.len();
        let pos = |id: &ModelId| active.binary_search(id).ok();
        let mut credit = vec![vec![F::zero(); n]; n];
        for r in filtered.records() {
            let s = pos(&r.reviewer).expect("filtered records have active reviewers");
            let (credit_a, credit_b) = match r.outcome {
                Outcome::FirstWins => (F::one(), F::zero()),
                Outcome::SecondWins => (F::zero(), F::one()),
                Outcome::Tie => (tie_credit, tie_credit),
            };
            // Contestants outside the active set score too, but only active
            // models enter the correlation.
            if let Some(a) = pos(&r.model_a) {
                credit[a][s] += credit_a;
            }
            if let Some(b) = pos(&r.model_b) {
                credit[b][s] += credit_b;
            }
        }
        PlainCredit { credit, n }
    }

    fn scores(&self, w: &[F]) -> Vec<F> {
        self.credit
            .iter()
            .map(|row| row.iter().zip(w).map(|(&c, &wi)| c * wi).sum())
            .collect()
    }
}

struct Moments<F: Real> {
    u: Vec<F>,
    v: Vec<F>,
    suv: F,
    suu: F,
    svv: F,
}

fn centered_moments<F: Real>(g: &[F], w: &[F]) -> Moments<F> {
    let n = F::from_usize(g.len()).unwrap();
    let mean_g = g.iter().copied().sum::<F>() / n;
    let mean_w = w.iter().copied().sum::<F>() / n;
    let u: Vec<F> = g.iter().map(|&x| x - mean_g).collect();
    let v: Vec<F> = w.iter().map(|&x| x - mean_w).collect();
    let suv = u.iter().zip(&v).map(|(&a, &b)| a * b).sum();
    let suu = u.iter().map(|&a| a * a).sum();
    let svv = v.iter().map(|&b| b * b).sum();
    Moments { u, v, suv, suu, svv }
}

/// Objective value and gradient evaluation in logit space.
trait Engine<F: Real> {
    fn value(&self, theta: &[F]) -> Result<F>;
    fn gradient(&self, theta: &[F]) -> Result<Vec<F>>;
}

fn logistic<F: Real>(t: F) -> F {
    F::one() / (F::one() + (-t).exp())
}

fn weights_from_theta<F: Real>(theta: &[F]) -> Vec<F> {
    theta.iter().map(|&t| logistic(t)).collect()
}

/// Analytic engine for the plain mechanism.
struct PlainEngine<F: Real> {
    credit: PlainCredit<F>,
}

impl<F: Real> Engine<F> for PlainEngine<F> {
    fn value(&self, theta: &[F]) -> Result<F> {
        let w = weights_from_theta(theta);
        let g = self.credit.scores(&w);
        pearson(&g, &w)
    }

    fn gradient(&self, theta: &[F]) -> Result<Vec<F>> {
        let w = weights_from_theta(theta);
        let g = self.credit.scores(&w);
        let m = centered_moments(&g, &w);
        if m.suu == F::zero() || m.svv == F::zero() {
            return Err(Error::Degenerate(
                "gradient undefined for a zero-variance sequence".into(),
            ));
        }
        let norm = (m.suu * m.svv).sqrt();
        let n = self.credit.n;
        // d rho / d g_j and the direct d rho / d w_j term.
        let dg: Vec<F> = (0..n)
            .map(|j| m.v[j] / norm - m.suv * m.u[j] / (m.suu * norm))
            .collect();
        let dw_direct: Vec<F> = (0..n)
            .map(|j| m.u[j] / norm - m.suv * m.v[j] / (m.svv * norm))
            .collect();
        Ok((0..n)
            .map(|s| {
                let chained: F = (0..n).map(|j| self.credit.credit[j][s] * dg[j]).sum();
                let sigmoid_slope = w[s] * (F::one() - w[s]);
                (chained + dw_direct[s]) * sigmoid_slope
            })
            .collect())
    }
}

/// Finite-difference engine for mechanisms whose scores are not linear in
/// the weights (Elo, Rank).
struct NumericEngine<'a, F: Real> {
    filtered: &'a ReviewDataset,
    active: &'a [ModelId],
    mechanism: &'a ScoringMechanism<F>,
}

impl<F: Real> NumericEngine<'_, F> {
    fn value_at(&self, w: &[F]) -> Result<F> {
        let weights = ConfidenceWeights::new(
            self.active.iter().cloned().zip(w.iter().copied()).collect(),
        )?;
        let scores = mechanism_scores(self.filtered, &weights, self.mechanism)?;
        let g: Vec<F> = self
            .active
            .iter()
            .map(|id| scores.get(id).expect("mechanism scores every registry model"))
            .collect();
        pearson(&g, w)
    }
}

const FD_STEP: f64 = 1e-5;

impl<F: Real> Engine<F> for NumericEngine<'_, F> {
    fn value(&self, theta: &[F]) -> Result<F> {
        self.value_at(&weights_from_theta(theta))
    }

    fn gradient(&self, theta: &[F]) -> Result<Vec<F>> {
        central_difference_gradient(&|t| self.value(t), theta)
    }
}

/// Central finite differences with step 1e-5 per coordinate, in logit space.
pub(crate) fn central_difference_gradient<F: Real>(
    f: &dyn Fn(&[F]) -> Result<F>,
    theta: &[F],
) -> Result<Vec<F>> {
    let h = F::from_f64_lossy(FD_STEP);
    let mut grad = Vec::with_capacity(theta.len());
    let mut probe = theta.to_vec();
    for i in 0..theta.len() {
        probe[i] = theta[i] + h;
        let up = f(&probe)?;
        probe[i] = theta[i] - h;
        let down = f(&probe)?;
        probe[i] = theta[i];
        grad.push((up - down) / (h + h));
    }
    Ok(grad)
}

// Logits stay inside this band; logistic(30) is still strictly below 1 in
// f32 and f64.
const THETA_CLAMP: f64 = 30.0;
const MAX_HALVINGS: u32 = 40;
const RESEED_ATTEMPTS: u64 = 5;

fn ascend<F: Real>(
    engine: &dyn Engine<F>,
    n: usize,
    cfg: &OptConfig<F>,
) -> Result<(Vec<F>, OptTrace<F>)> {
    let clamp = F::from_f64_lossy(THETA_CLAMP);

    // Gaussian initialization; reseed on a degenerate starting objective.
    let mut theta = Vec::new();
    let mut start = None;
    for attempt in 0..RESEED_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(attempt);
        theta = (0..n)
            .map(|_| F::from_f64_lossy(StandardNormal.sample(&mut rng)))
            .collect();
        match engine.value(&theta) {
            Ok(value) => {
                start = Some(value);
                break;
            }
            Err(Error::Degenerate(_)) if attempt + 1 < RESEED_ATTEMPTS => continue,
            Err(e) => return Err(e),
        }
    }
    let mut current = start.ok_or_else(|| {
        Error::Degenerate(format!(
            "objective degenerate at initialization after {RESEED_ATTEMPTS} seeds"
        ))
    })?;

    let mut objective_trace = vec![current];
    let mut converged = false;

    'outer: for _ in 0..cfg.max_iters {
        let grad = engine.gradient(&theta)?;
        let mut step = cfg.step_size;
        // Fixed nominal step; halve while the move would lower the
        // objective so the trace stays non-decreasing.
        for _ in 0..=MAX_HALVINGS {
            let candidate: Vec<F> = theta
                .iter()
                .zip(&grad)
                .map(|(&t, &g)| (t + step * g).max(-clamp).min(clamp))
                .collect();
            match engine.value(&candidate) {
                Ok(value) if value >= current => {
                    let improvement = value - current;
                    theta = candidate;
                    current = value;
                    objective_trace.push(current);
                    let denom = F::one().max(current.abs());
                    if improvement / denom < cfg.rel_tol {
                        converged = true;
                        break 'outer;
                    }
                    continue 'outer;
                }
                // A lower value or a degenerate point: shorten the step.
                Ok(_) | Err(Error::Degenerate(_)) => step *= F::from_f64_lossy(0.5),
                Err(e) => return Err(e),
            }
        }
        // No step length improves the objective: at a numerical optimum.
        converged = true;
        break;
    }

    Ok((
        theta,
        OptTrace {
            objective: objective_trace,
            converged,
        },
    ))
}

/// Analytic gradient of the plain-mechanism consistency objective with
/// respect to the logits `theta` (weights are `logistic(theta)`), over the
/// given active models. `active` must be sorted ascending and aligned with
/// `theta`. Exposed so the analytic route can be checked against finite
/// differences.
pub fn plain_gradient<F: Real>(
    dataset: &ReviewDataset,
    active: &[ModelId],
    theta: &[F],
    tie_credit: F,
) -> Result<Vec<F>> {
    if active.len() != theta.len() {
        return Err(Error::Argument(format!(
            "{} active models but {} logits",
            active.len(),
            theta.len()
        )));
    }
    if active.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument("active models must be sorted ascending".into()));
    }
    let active_set: BTreeSet<ModelId> = active.iter().cloned().collect();
    check_active(dataset, &active_set)?;
    let filtered = dataset.filter_reviewers(&active_set);
    let engine = PlainEngine {
        credit: PlainCredit::build(&filtered, active, tie_credit),
    };
    engine.gradient(theta)
}

/// Learns confidence weights for every registry model.
pub fn optimize_weights<F: Real>(
    dataset: &ReviewDataset,
    cfg: &OptConfig<F>,
) -> Result<(ConfidenceWeights<F>, OptTrace<F>)> {
    let active: BTreeSet<ModelId> = dataset.registry().iter().cloned().collect();
    optimize_weights_restricted(dataset, &active, cfg)
}

/// Learns confidence weights for the active reviewers only: records from
/// inactive reviewers are excluded and the consistency objective correlates
/// over the active set.
pub fn optimize_weights_restricted<F: Real>(
    dataset: &ReviewDataset,
    active: &BTreeSet<ModelId>,
    cfg: &OptConfig<F>,
) -> Result<(ConfidenceWeights<F>, OptTrace<F>)> {
    cfg.validate()?;
    check_active(dataset, active)?;
    if active.len() < 3 {
        return Err(Error::Argument(format!(
            "optimization needs at least 3 active models, got {}",
            active.len()
        )));
    }
    let filtered = dataset.filter_reviewers(active);
    if filtered.is_empty() {
        return Err(Error::Degenerate(
            "no records from active reviewers; nothing to optimize".into(),
        ));
    }
    let active_sorted: Vec<ModelId> = active.iter().cloned().collect();

    let (theta, trace) = match &cfg.mechanism {
        ScoringMechanism::Plain { tie_credit } => {
            let engine = PlainEngine {
                credit: PlainCredit::build(&filtered, &active_sorted, *tie_credit),
            };
            ascend(&engine, active_sorted.len(), cfg)?
        }
        mechanism => {
            let engine = NumericEngine {
                filtered: &filtered,
                active: &active_sorted,
                mechanism,
            };
            ascend(&engine, active_sorted.len(), cfg)?
        }
    };

    let weights = ConfidenceWeights::new(
        active_sorted
            .into_iter()
            .zip(weights_from_theta(&theta))
            .collect(),
    )?;
    Ok((weights, trace))
}
