//! Declarative engine configuration.
//!
//! One TOML document describes a whole experiment: the model pool, pair
//! construction, simulation parameters, judge endpoints, scoring mechanism,
//! optimization, and elimination mode. Command-line flags override the seed
//! and output directory; everything else lives here so a run is
//! reproducible from (config, seed).

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use peerrank_core::consistency::OptConfig;
use peerrank_core::elimination::{EliminationConfig, EliminationMode};
use peerrank_core::review::{CollectOptions, Pairing, PairingStrategy};
use peerrank_core::scoring::{EloConfig, RankConfig, ScoringMechanism};
use peerrank_core::sim::{AbilitySpacing, JudgeSkill, SelfReviewStudy, SimConfig};
use peerrank_core::{ModelRegistry, Scalar};
use peerrank_judge::JudgeEndpointConfig;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    #[serde(default)]
    pub seed: u64,
    /// Output directory for artifacts; flags may override.
    #[serde(default = "default_out")]
    pub out: String,
    #[serde(default)]
    pub registry: RegistrySection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub pairing: PairingSection,
    #[serde(default)]
    pub review: ReviewSection,
    #[serde(default)]
    pub scoring: ScoringSection,
    #[serde(default)]
    pub opt: OptSection,
    #[serde(default)]
    pub elimination: EliminationSection,
    /// Judge endpoint per reviewer model id (remote judging only).
    #[serde(default)]
    pub endpoints: BTreeMap<String, JudgeEndpointConfig>,
}

fn default_out() -> String {
    "out".into()
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RegistrySection {
    #[serde(default)]
    pub models: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub models: usize,
    pub questions: usize,
    pub reviewers_per_pair: usize,
    pub quality_noise: Scalar,
    pub tie_margin: Scalar,
    pub judge_sharpness: Scalar,
    pub ability_spacing: AbilitySpacingField,
    pub judge_skill: JudgeSkillField,
    pub data_fraction: Scalar,
    pub zero_ability_fraction: Scalar,
    pub perception_noise: Scalar,
    #[serde(default)]
    pub self_review: Option<SelfReviewSection>,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            models: 15,
            questions: 80,
            reviewers_per_pair: 5,
            quality_noise: 0.2,
            tie_margin: 0.05,
            judge_sharpness: 0.5,
            ability_spacing: AbilitySpacingField::Even,
            judge_skill: JudgeSkillField::default(),
            data_fraction: 1.0,
            zero_ability_fraction: 0.0,
            perception_noise: 0.0,
            self_review: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbilitySpacingField {
    Even,
    Uniform,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JudgeSkillField {
    #[default]
    FollowAbility,
    Constant { value: Scalar },
    Scaled { value: Scalar },
    Power { value: Scalar },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelfReviewSection {
    pub biased_count: usize,
    pub self_win_probability: Scalar,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairingSection {
    pub kind: PairingKind,
    #[serde(default)]
    pub pairs_per_question: Option<usize>,
    pub data_fraction: Scalar,
}

impl Default for PairingSection {
    fn default() -> Self {
        PairingSection {
            kind: PairingKind::AllPairs,
            pairs_per_question: None,
            data_fraction: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum PairingKind {
    AllPairs,
    Sampled,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReviewSection {
    pub judge: JudgeKind,
    pub reviewers_per_pair: usize,
    pub concurrency: usize,
    pub allow_self_review: bool,
    pub prompt_kind: PromptKindField,
}

impl Default for ReviewSection {
    fn default() -> Self {
        ReviewSection {
            judge: JudgeKind::Synthetic,
            reviewers_per_pair: 5,
            concurrency: 4,
            allow_self_review: false,
            prompt_kind: PromptKindField::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum JudgeKind {
    Synthetic,
    Remote,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum PromptKindField {
    Auto,
    Single,
    SingleRef,
    Multi,
    MultiRef,
}

impl PromptKindField {
    pub fn fixed(self) -> Option<peerrank_judge::PromptKind> {
        use peerrank_judge::PromptKind;
        match self {
            PromptKindField::Auto => None,
            PromptKindField::Single => Some(PromptKind::Single),
            PromptKindField::SingleRef => Some(PromptKind::SingleRef),
            PromptKindField::Multi => Some(PromptKind::Multi),
            PromptKindField::MultiRef => Some(PromptKind::MultiRef),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringSection {
    pub mechanism: MechanismKind,
    pub tie_credit: Scalar,
    pub elo_k_factor: Scalar,
    pub elo_initial: Scalar,
    pub elo_base: Scalar,
    pub elo_scale: Scalar,
    pub elo_passes: usize,
    pub rank_k: Scalar,
    pub rank_passes: usize,
}

impl Default for ScoringSection {
    fn default() -> Self {
        ScoringSection {
            mechanism: MechanismKind::Plain,
            tie_credit: 0.5,
            elo_k_factor: 32.0,
            elo_initial: 1000.0,
            elo_base: 10.0,
            elo_scale: 400.0,
            elo_passes: 1,
            rank_k: 200.0,
            rank_passes: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    Plain,
    Elo,
    Rank,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptSection {
    pub step_size: Scalar,
    pub max_iters: usize,
    pub rel_tol: Scalar,
}

impl Default for OptSection {
    fn default() -> Self {
        OptSection {
            step_size: 0.05,
            max_iters: 1000,
            rel_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EliminationSection {
    pub mode: EliminationModeKind,
    pub fraction: Scalar,
}

impl Default for EliminationSection {
    fn default() -> Self {
        EliminationSection {
            mode: EliminationModeKind::Fixed,
            fraction: 0.6,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum EliminationModeKind {
    Fixed,
    Auto,
}

impl EngineConfig {
    pub fn load(path: &Path) -> Result<EngineConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: EngineConfig =
            toml::from_str(&text).with_context(|| format!("cannot parse config {}", path.display()))?;
        Ok(config)
    }

    /// Stable hash of the effective configuration, for the run manifest.
    /// The output directory is excluded: it locates artifacts but does not
    /// define the experiment.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut identity = self.clone();
        identity.out = String::new();
        let canonical = serde_json::to_string(&identity).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn sim_config(&self) -> SimConfig<Scalar> {
        let s = &self.sim;
        let mut cfg = SimConfig::new(s.models, s.questions, self.seed);
        cfg.reviewers_per_pair = s.reviewers_per_pair;
        cfg.quality_noise = s.quality_noise;
        cfg.tie_margin = s.tie_margin;
        cfg.judge_sharpness = s.judge_sharpness;
        cfg.ability_spacing = match s.ability_spacing {
            AbilitySpacingField::Even => AbilitySpacing::Even,
            AbilitySpacingField::Uniform => AbilitySpacing::Uniform,
        };
        cfg.judge_skill = match s.judge_skill {
            JudgeSkillField::FollowAbility => JudgeSkill::FollowAbility,
            JudgeSkillField::Constant { value } => JudgeSkill::Constant(value),
            JudgeSkillField::Scaled { value } => JudgeSkill::Scaled(value),
            JudgeSkillField::Power { value } => JudgeSkill::Power(value),
        };
        cfg.data_fraction = s.data_fraction;
        cfg.zero_ability_fraction = s.zero_ability_fraction;
        cfg.perception_noise = s.perception_noise;
        cfg.self_review = s.self_review.map(|sr| SelfReviewStudy {
            biased_count: sr.biased_count,
            self_win_probability: sr.self_win_probability,
        });
        cfg
    }

    pub fn pairing_strategy(&self) -> Result<PairingStrategy<Scalar>> {
        let pairing = match self.pairing.kind {
            PairingKind::AllPairs => Pairing::AllPairs,
            PairingKind::Sampled => match self.pairing.pairs_per_question {
                Some(p) => Pairing::Sampled { pairs_per_question: p },
                None => bail!("pairing.kind = \"sampled\" needs pairing.pairs_per_question"),
            },
        };
        Ok(PairingStrategy {
            pairing,
            data_fraction: self.pairing.data_fraction,
        })
    }

    pub fn collect_options(&self) -> CollectOptions {
        CollectOptions {
            reviewers_per_pair: self.review.reviewers_per_pair,
            seed: self.seed,
            concurrency: self.review.concurrency,
            allow_self_review: self.review.allow_self_review,
        }
    }

    pub fn mechanism(&self) -> ScoringMechanism<Scalar> {
        let s = &self.scoring;
        match s.mechanism {
            MechanismKind::Plain => ScoringMechanism::Plain {
                tie_credit: s.tie_credit,
            },
            MechanismKind::Elo => ScoringMechanism::Elo(EloConfig {
                base: s.elo_base,
                scale: s.elo_scale,
                initial: s.elo_initial,
                k_factor: s.elo_k_factor,
                passes: s.elo_passes,
                shuffle_seed: self.seed,
            }),
            MechanismKind::Rank => ScoringMechanism::Rank(RankConfig {
                k: s.rank_k,
                passes: s.rank_passes,
            }),
        }
    }

    pub fn opt_config(&self) -> OptConfig<Scalar> {
        let mut cfg = OptConfig::new(self.seed);
        cfg.step_size = self.opt.step_size;
        cfg.max_iters = self.opt.max_iters;
        cfg.rel_tol = self.opt.rel_tol;
        cfg.mechanism = self.mechanism();
        cfg
    }

    pub fn elimination_config(&self) -> EliminationConfig<Scalar> {
        let mode = match self.elimination.mode {
            EliminationModeKind::Fixed => EliminationMode::Fixed {
                fraction: self.elimination.fraction,
            },
            EliminationModeKind::Auto => EliminationMode::Auto,
        };
        EliminationConfig {
            mode,
            opt: self.opt_config(),
        }
    }

    /// Registry from the config's explicit model list.
    pub fn registry(&self) -> Result<Option<ModelRegistry>> {
        if self.registry.models.is_empty() {
            return Ok(None);
        }
        Ok(Some(ModelRegistry::from_names(
            self.registry.models.iter().cloned(),
        )?))
    }
}
