//! Synthetic model populations with known ground-truth abilities.
//!
//! The generator embodies the consistency assumption under test: a model's
//! latent ability drives both the quality of its answers and, by default,
//! how reliably it judges other models' answers. Datasets produced here act
//! as the oracle for the optimization, elimination, and bias analyses.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{ModelId, ModelRegistry, Outcome, Ranking, ReviewDataset, ReviewRecord};
use crate::scalar::Real;

/// One synthetic model: an id plus a latent ability in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticModel<F: Real> {
    pub id: ModelId,
    pub ability: F,
}

/// How abilities are laid out over the population.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbilitySpacing {
    /// Evenly spaced from 1 down to 0, so the ground-truth ranking is
    /// unambiguous.
    Even,
    /// Sampled i.i.d. uniformly from `[0, 1]`.
    Uniform,
}

/// How a reviewer's judging skill relates to its ability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JudgeSkill<F: Real> {
    /// Skill equals ability (the consistency assumption).
    FollowAbility,
    /// Every reviewer judges with the same fixed skill.
    Constant(F),
    /// Skill is `scale * ability`, clamped to `[0, 1]`.
    Scaled(F),
    /// Skill is `ability ^ exponent`, sharpening the skill hierarchy.
    Power(F),
}

/// Optional self-review study: contestants additionally review their own
/// battles, and the `biased_count` lowest-ability models claim their own
/// answer won with probability `self_win_probability`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfReviewStudy<F: Real> {
    pub biased_count: usize,
    pub self_win_probability: F,
}

/// Simulation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig<F: Real> {
    /// Pool size `m` (at least 3).
    pub n_models: usize,
    /// Question count `n`.
    pub n_questions: usize,
    /// Distinct reviewers assigned per battle pair (clamped to `m - 2`).
    pub reviewers_per_pair: usize,
    /// Standard deviation of per-question answer quality around ability.
    pub quality_noise: F,
    /// Quality gaps below this margin are declared ties.
    pub tie_margin: F,
    /// Temperature of the judge response curve: gaps far below it are hard
    /// to call, gaps far above it easy.
    pub judge_sharpness: F,
    pub seed: u64,
    pub ability_spacing: AbilitySpacing,
    pub judge_skill: JudgeSkill<F>,
    /// Fraction of battle pairs kept per question (pair-level subsampling).
    pub data_fraction: F,
    /// Fraction of the pool whose ability is forced to exactly zero,
    /// taken from the bottom of the ability order: pure-noise judges.
    pub zero_ability_fraction: F,
    /// Scale of persistent per-(judge, model) perception error. Zero keeps
    /// the pure flip-noise judge model. Positive values give every judge a
    /// fixed distorted view of each model, with distortion
    /// `Normal(0, (scale * (1 - skill))^2)`: weak judges are then
    /// *consistently* wrong about specific models rather than merely
    /// undecided, so their errors do not average out with more questions.
    pub perception_noise: F,
    pub self_review: Option<SelfReviewStudy<F>>,
}

impl<F: Real> SimConfig<F> {
    /// Defaults: 5 reviewers per pair, quality noise 0.2, tie margin 0.05,
    /// sharpness 0.5, even abilities, skill following ability, full data.
    pub fn new(n_models: usize, n_questions: usize, seed: u64) -> Self {
        SimConfig {
            n_models,
            n_questions,
            reviewers_per_pair: 5,
            quality_noise: F::from_f64_lossy(0.2),
            tie_margin: F::from_f64_lossy(0.05),
            judge_sharpness: F::from_f64_lossy(0.5),
            seed,
            ability_spacing: AbilitySpacing::Even,
            judge_skill: JudgeSkill::FollowAbility,
            data_fraction: F::one(),
            zero_ability_fraction: F::zero(),
            perception_noise: F::zero(),
            self_review: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_models < 3 {
            return Err(Error::Argument(format!(
                "simulation needs at least 3 models, got {}",
                self.n_models
            )));
        }
        if self.n_questions == 0 {
            return Err(Error::Argument("simulation needs at least 1 question".into()));
        }
        if self.reviewers_per_pair == 0 {
            return Err(Error::Argument("reviewers_per_pair must be >= 1".into()));
        }
        if !(self.quality_noise > F::zero()) {
            return Err(Error::Argument(format!(
                "quality noise must be positive, got {}",
                self.quality_noise
            )));
        }
        if !(self.tie_margin >= F::zero()) {
            return Err(Error::Argument(format!(
                "tie margin must be non-negative, got {}",
                self.tie_margin
            )));
        }
        if !(self.judge_sharpness > F::zero()) {
            return Err(Error::Argument(format!(
                "judge sharpness must be positive, got {}",
                self.judge_sharpness
            )));
        }
        if !(self.data_fraction > F::zero() && self.data_fraction <= F::one()) {
            return Err(Error::Argument(format!(
                "data fraction must lie in (0, 1], got {}",
                self.data_fraction
            )));
        }
        if !(self.zero_ability_fraction >= F::zero() && self.zero_ability_fraction < F::one()) {
            return Err(Error::Argument(format!(
                "zero-ability fraction must lie in [0, 1), got {}",
                self.zero_ability_fraction
            )));
        }
        if !(self.perception_noise >= F::zero()) {
            return Err(Error::Argument(format!(
                "perception noise must be non-negative, got {}",
                self.perception_noise
            )));
        }
        Ok(())
    }
}

// Distinct ChaCha streams keep population, quality, and verdict draws
// independent of each other while staying reproducible from one seed.
const STREAM_POPULATION: u64 = 1;
const STREAM_QUALITIES: u64 = 2;
const STREAM_VERDICTS: u64 = 3;
const STREAM_PERCEPTION: u64 = 4;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generates the population: `m` models named `m01..`, abilities laid out
/// per `cfg.ability_spacing`, with the lowest `zero_ability_fraction` of the
/// pool zeroed out.
pub fn gen_population<F: Real>(cfg: &SimConfig<F>) -> Result<Vec<SyntheticModel<F>>> {
    cfg.validate()?;
    let m = cfg.n_models;
    let width = m.to_string().len().max(2);
    let mut rng = stream_rng(cfg.seed, STREAM_POPULATION);
    let mut models: Vec<SyntheticModel<F>> = (0..m)
        .map(|i| {
            let ability = match cfg.ability_spacing {
                AbilitySpacing::Even => {
                    F::one() - F::from_usize(i).unwrap() / F::from_usize(m - 1).unwrap()
                }
                AbilitySpacing::Uniform => F::from_f64_lossy(rng.random::<f64>()),
            };
            SyntheticModel {
                id: ModelId::new(format!("m{:0width$}", i + 1)).expect("generated id is non-empty"),
                ability,
            }
        })
        .collect();

    let zeroed = (cfg.zero_ability_fraction.to_f64().unwrap() * m as f64).floor() as usize;
    if zeroed > 0 {
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            models[a]
                .ability
                .partial_cmp(&models[b].ability)
                .unwrap()
                .then_with(|| models[a].id.cmp(&models[b].id))
        });
        for &i in order.iter().take(zeroed) {
            models[i].ability = F::zero();
        }
    }
    Ok(models)
}

/// The registry induced by a population, in generation order.
pub fn population_registry<F: Real>(population: &[SyntheticModel<F>]) -> Result<ModelRegistry> {
    ModelRegistry::new(population.iter().map(|m| m.id.clone()).collect())
}

/// The ability-descending ranking (ties broken by ascending id).
pub fn ground_truth_ranking<F: Real>(population: &[SyntheticModel<F>]) -> Result<Ranking> {
    let mut order: Vec<&SyntheticModel<F>> = population.iter().collect();
    order.sort_by(|a, b| {
        b.ability
            .partial_cmp(&a.ability)
            .expect("abilities are finite")
            .then_with(|| a.id.cmp(&b.id))
    });
    Ranking::from_order(order.into_iter().map(|m| m.id.clone()).collect())
}

/// Draws the latent answer quality `q ~ Normal(ability, quality_noise)` for
/// every (question, model) cell, reproducibly from the config seed.
pub fn gen_answer_qualities<F: Real>(
    population: &[SyntheticModel<F>],
    cfg: &SimConfig<F>,
) -> BTreeMap<(u64, ModelId), F> {
    let mut rng = stream_rng(cfg.seed, STREAM_QUALITIES);
    let sigma = cfg.quality_noise.to_f64().unwrap();
    let mut qualities = BTreeMap::new();
    for q in 1..=cfg.n_questions as u64 {
        for model in population {
            let normal = Normal::new(model.ability.to_f64().unwrap(), sigma)
                .expect("validated sigma is positive and finite");
            let draw = normal.sample(&mut rng);
            qualities.insert((q, model.id.clone()), F::from_f64_lossy(draw));
        }
    }
    qualities
}

/// Persistent per-(judge, model) perception offsets: judge `s` sees model
/// `j`'s answers shifted by `bias[s][j] ~ Normal(0, (scale * (1 - skill_s))^2)`,
/// drawn once per run. Fully skilled judges see the truth; unskilled judges
/// hold fixed misconceptions.
pub fn gen_perception_biases<F: Real>(
    population: &[SyntheticModel<F>],
    cfg: &SimConfig<F>,
) -> Vec<Vec<F>> {
    let mut rng = stream_rng(cfg.seed, STREAM_PERCEPTION);
    let scale = cfg.perception_noise.to_f64().unwrap();
    population
        .iter()
        .map(|judge| {
            let skill = judge_skill_of(judge.ability, &cfg.judge_skill).to_f64().unwrap();
            let sd = scale * (1.0 - skill);
            population
                .iter()
                .map(|_| {
                    // Draw unconditionally to keep the stream layout fixed.
                    let draw: f64 = StandardNormal.sample(&mut rng);
                    F::from_f64_lossy(draw * sd)
                })
                .collect()
        })
        .collect()
}

/// Probability that a judge with the given skill picks the truly better
/// answer: `0.5 + 0.5 * skill * tanh(|gap| / sharpness)`, with skill clamped
/// to `[0, 1]`. Zero skill is a coin flip, full skill on a decisive gap is a
/// sure call.
pub fn win_probability<F: Real>(judge_skill: F, quality_gap: F, sharpness: F) -> F {
    let half = F::from_f64_lossy(0.5);
    let skill = judge_skill.max(F::zero()).min(F::one());
    half + half * skill * (quality_gap.abs() / sharpness).tanh()
}

/// Resolves a reviewer's judging skill from its ability under the config's
/// skill model.
pub fn judge_skill_of<F: Real>(ability: F, skill: &JudgeSkill<F>) -> F {
    let raw = match skill {
        JudgeSkill::FollowAbility => ability,
        JudgeSkill::Constant(c) => *c,
        JudgeSkill::Scaled(s) => *s * ability,
        JudgeSkill::Power(p) => ability.powf(*p),
    };
    raw.max(F::zero()).min(F::one())
}

/// One synthetic verdict over latent qualities `(q_a, q_b)`: gaps inside the
/// tie margin are ties; otherwise the truly better answer wins with
/// probability [`win_probability`].
pub fn synthetic_verdict<F: Real>(
    judge_skill: F,
    q_a: F,
    q_b: F,
    cfg: &SimConfig<F>,
    rng: &mut impl Rng,
) -> Outcome {
    let gap = q_a - q_b;
    if gap.abs() < cfg.tie_margin {
        return Outcome::Tie;
    }
    let p = win_probability(judge_skill, gap, cfg.judge_sharpness).to_f64().unwrap();
    let better_first = gap > F::zero();
    let pick_better = rng.random::<f64>() < p;
    if better_first == pick_better {
        Outcome::FirstWins
    } else {
        Outcome::SecondWins
    }
}

/// Runs the full generator: population, per-question qualities, battle
/// pairs, reviewer assignment, and verdicts. Returns the dataset together
/// with the ground-truth ranking.
pub fn simulate_dataset<F: Real>(cfg: &SimConfig<F>) -> Result<(ReviewDataset, Ranking)> {
    let population = gen_population(cfg)?;
    let registry = population_registry(&population)?;
    let ground_truth = ground_truth_ranking(&population)?;
    let qualities = gen_answer_qualities(&population, cfg);

    let m = cfg.n_models;
    let reviewers_per_pair = cfg.reviewers_per_pair.min(m - 2);
    if reviewers_per_pair < cfg.reviewers_per_pair {
        log::warn!(
            "clamping reviewers_per_pair from {} to {} (pool of {m} leaves only {} non-contestants)",
            cfg.reviewers_per_pair,
            reviewers_per_pair,
            m - 2
        );
    }

    let skills: Vec<F> = population
        .iter()
        .map(|model| judge_skill_of(model.ability, &cfg.judge_skill))
        .collect();
    let perception = if cfg.perception_noise > F::zero() {
        Some(gen_perception_biases(&population, cfg))
    } else {
        None
    };
    let biased_cutoff = cfg.self_review.map(|study| {
        // The `biased_count` lowest-ability models self-promote.
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            population[a]
                .ability
                .partial_cmp(&population[b].ability)
                .unwrap()
                .then_with(|| population[a].id.cmp(&population[b].id))
        });
        let biased: Vec<usize> = order.into_iter().take(study.biased_count).collect();
        (biased, study.self_win_probability.to_f64().unwrap())
    });

    let all_pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| ((i + 1)..m).map(move |j| (i, j)))
        .collect();
    let kept_per_question = ((cfg.data_fraction.to_f64().unwrap() * all_pairs.len() as f64).floor()
        as usize)
        .max(1);

    let mut rng = stream_rng(cfg.seed, STREAM_VERDICTS);
    let mut records = Vec::new();
    for q in 1..=cfg.n_questions as u64 {
        let pairs: Vec<(usize, usize)> = if kept_per_question < all_pairs.len() {
            rand::seq::index::sample(&mut rng, all_pairs.len(), kept_per_question)
                .into_iter()
                .map(|i| all_pairs[i])
                .collect()
        } else {
            all_pairs.clone()
        };
        for (i, j) in pairs {
            // Seeded member-order flip so neither side of a pair is always
            // presented first.
            let (a, b) = if rng.random::<bool>() { (i, j) } else { (j, i) };
            let q_a = qualities[&(q, population[a].id.clone())];
            let q_b = qualities[&(q, population[b].id.clone())];

            let pool: Vec<usize> = (0..m).filter(|&s| s != a && s != b).collect();
            let mut reviewers: Vec<usize> =
                rand::seq::index::sample(&mut rng, pool.len(), reviewers_per_pair)
                    .into_iter()
                    .map(|s| pool[s])
                    .collect();
            if cfg.self_review.is_some() {
                reviewers.push(a);
                reviewers.push(b);
            }

            for s in reviewers {
                let honest = |rng: &mut ChaCha8Rng| match &perception {
                    // Perceived qualities, judged confidently: weak judges
                    // are consistently wrong, not merely undecided.
                    Some(bias) => synthetic_verdict(
                        F::one(),
                        q_a + bias[s][a],
                        q_b + bias[s][b],
                        cfg,
                        rng,
                    ),
                    None => synthetic_verdict(skills[s], q_a, q_b, cfg, rng),
                };
                let outcome = match &biased_cutoff {
                    Some((biased, self_win)) if (s == a || s == b) && biased.contains(&s) => {
                        if rng.random::<f64>() < *self_win {
                            if s == a {
                                Outcome::FirstWins
                            } else {
                                Outcome::SecondWins
                            }
                        } else {
                            honest(&mut rng)
                        }
                    }
                    _ => honest(&mut rng),
                };
                records.push(ReviewRecord {
                    question_id: q,
                    model_a: population[a].id.clone(),
                    model_b: population[b].id.clone(),
                    outcome,
                    reviewer: population[s].id.clone(),
                });
            }
        }
    }

    let dataset = if cfg.self_review.is_some() {
        ReviewDataset::new_with_self_reviews(records, registry)?
    } else {
        ReviewDataset::new(records, registry)?
    };
    Ok((dataset, ground_truth))
}

/// A [`crate::review::PairJudge`] backed by the synthetic model: verdicts
/// come from latent abilities instead of a remote endpoint, with every
/// judgment seeded by its own (question, pair, reviewer) key so collection
/// order and concurrency never change the outcome.
#[derive(Debug, Clone)]
pub struct SyntheticJudge<F: Real> {
    cfg: SimConfig<F>,
    abilities: BTreeMap<ModelId, F>,
    skills: BTreeMap<ModelId, F>,
}

impl<F: Real> SyntheticJudge<F> {
    pub fn new(cfg: SimConfig<F>) -> Result<Self> {
        let population = gen_population(&cfg)?;
        Self::from_population(cfg, population)
    }

    /// Builds the judge over caller-provided model ids: latent abilities are
    /// laid out positionally (first id strongest under even spacing), so any
    /// registry can be judged synthetically.
    pub fn for_models(mut cfg: SimConfig<F>, ids: &[ModelId]) -> Result<Self> {
        cfg.n_models = ids.len();
        let mut population = gen_population(&cfg)?;
        for (model, id) in population.iter_mut().zip(ids) {
            model.id = id.clone();
        }
        Self::from_population(cfg, population)
    }

    fn from_population(cfg: SimConfig<F>, population: Vec<SyntheticModel<F>>) -> Result<Self> {
        let abilities = population
            .iter()
            .map(|m| (m.id.clone(), m.ability))
            .collect();
        let skills = population
            .iter()
            .map(|m| (m.id.clone(), judge_skill_of(m.ability, &cfg.judge_skill)))
            .collect();
        Ok(SyntheticJudge {
            cfg,
            abilities,
            skills,
        })
    }

    /// Latent answer quality for a (question, model) cell, derived from a
    /// per-cell seed so it is stable whatever subset of cells is evaluated.
    fn quality(&self, question_id: u64, model: &ModelId) -> Result<F> {
        let ability = self
            .abilities
            .get(model)
            .ok_or_else(|| Error::Schema(format!("model {model:?} unknown to the simulator")))?;
        let cell = crate::review::task_seed(
            self.cfg.seed,
            question_id,
            model,
            model,
            model,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(cell);
        let normal = Normal::new(ability.to_f64().unwrap(), self.cfg.quality_noise.to_f64().unwrap())
            .expect("validated sigma is positive and finite");
        Ok(F::from_f64_lossy(normal.sample(&mut rng)))
    }
}

impl<F: Real> SyntheticJudge<F> {
    /// Persistent perception offset of `reviewer` about `model`, stable per
    /// (seed, reviewer, model) cell.
    fn perception_bias(&self, reviewer: &ModelId, model: &ModelId, skill: F) -> F {
        let cell = crate::review::task_seed(self.cfg.seed, u64::MAX, model, model, reviewer);
        let mut rng = ChaCha8Rng::seed_from_u64(cell);
        let draw: f64 = StandardNormal.sample(&mut rng);
        let sd = self.cfg.perception_noise * (F::one() - skill);
        sd * F::from_f64_lossy(draw)
    }
}

impl<F: Real> crate::review::PairJudge for SyntheticJudge<F> {
    fn judge_pair(
        &self,
        task: &crate::review::BattleTask<'_>,
    ) -> std::result::Result<Outcome, crate::review::JudgeFailure> {
        let fail = |e: Error| crate::review::JudgeFailure::Transport(e.to_string());
        let q_a = self.quality(task.question.question_id, &task.answer_a.model).map_err(fail)?;
        let q_b = self.quality(task.question.question_id, &task.answer_b.model).map_err(fail)?;
        let skill = *self
            .skills
            .get(task.reviewer)
            .ok_or_else(|| {
                crate::review::JudgeFailure::Transport(format!(
                    "reviewer {:?} unknown to the simulator",
                    task.reviewer
                ))
            })?;
        let mut rng = ChaCha8Rng::seed_from_u64(crate::review::task_seed(
            self.cfg.seed,
            task.question.question_id,
            &task.answer_a.model,
            &task.answer_b.model,
            task.reviewer,
        ));
        if self.cfg.perception_noise > F::zero() {
            let seen_a = q_a + self.perception_bias(task.reviewer, &task.answer_a.model, skill);
            let seen_b = q_b + self.perception_bias(task.reviewer, &task.answer_b.model, skill);
            Ok(synthetic_verdict(F::one(), seen_a, seen_b, &self.cfg, &mut rng))
        } else {
            Ok(synthetic_verdict(skill, q_a, q_b, &self.cfg, &mut rng))
        }
    }
}
