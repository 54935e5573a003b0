//! Subcommand implementations.
//!
//! Every command reads and writes the flat-file formats under the output
//! directory and drops a run manifest (config hash, seed, version) beside
//! its artifacts, so a finished directory fully documents how it was made.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use peerrank_core::consistency::optimize_weights;
use peerrank_core::elimination::run_elimination;
use peerrank_core::io as data_io;
use peerrank_core::metrics::alignment_report;
use peerrank_core::review::{build_pairs, collect_reviews};
use peerrank_core::scoring::mechanism_scores;
use peerrank_core::sim::{simulate_dataset, SyntheticJudge};
use peerrank_core::{
    ranking_from_scores, Answer, ModelId, ModelRegistry, Ranking, ReviewDataset, Scalar, Weights,
};
use peerrank_judge::{ChatClient, RemoteJudge};

use crate::config::{EngineConfig, JudgeKind};

pub struct Paths {
    out: PathBuf,
}

impl Paths {
    pub fn new(out: &Path) -> Result<Paths> {
        std::fs::create_dir_all(out)
            .with_context(|| format!("cannot create output directory {}", out.display()))?;
        Ok(Paths { out: out.to_path_buf() })
    }

    fn file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn models(&self) -> PathBuf {
        self.file("models.json")
    }

    pub fn reviews(&self) -> PathBuf {
        self.file("reviews.jsonl")
    }

    pub fn questions(&self) -> PathBuf {
        self.file("questions.jsonl")
    }

    pub fn answers(&self) -> PathBuf {
        self.file("answers.jsonl")
    }

    pub fn ground_truth(&self) -> PathBuf {
        self.file("ground_truth.json")
    }

    pub fn weights(&self) -> PathBuf {
        self.file("weights.json")
    }

    pub fn trace(&self) -> PathBuf {
        self.file("trace.csv")
    }

    pub fn elimination(&self) -> PathBuf {
        self.file("elimination.csv")
    }

    pub fn ranking(&self) -> PathBuf {
        self.file("ranking.json")
    }

    pub fn leaderboard_json(&self) -> PathBuf {
        self.file("leaderboard.json")
    }

    pub fn leaderboard_txt(&self) -> PathBuf {
        self.file("leaderboard.txt")
    }

    pub fn metrics(&self) -> PathBuf {
        self.file("metrics.json")
    }

    pub fn pg_matrix(&self) -> PathBuf {
        self.file("pg_matrix.csv")
    }

    pub fn pg_reweighted(&self) -> PathBuf {
        self.file("pg_reweighted.csv")
    }

    pub fn pg_coverage(&self) -> PathBuf {
        self.file("pg_coverage.txt")
    }
}

fn open_reader(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| {
        format!("cannot open {}", path.display())
    })?))
}

fn create_writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("cannot create {}", path.display())
    })?))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: String,
    seed: u64,
    version: &'a str,
}

fn write_manifest(paths: &Paths, config: &EngineConfig, command: &str) -> Result<()> {
    let manifest = Manifest {
        command,
        config_hash: config.digest(),
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION"),
    };
    let mut w = create_writer(&paths.file(&format!("manifest-{command}.json")))?;
    writeln!(w, "{}", serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn read_registry_at(path: &Path) -> Result<ModelRegistry> {
    Ok(data_io::read_registry(open_reader(path)?)?)
}

/// Reads reviews and splits off self-review rows: scoring and optimization
/// exclude a reviewer's verdicts on its own battles.
fn read_dataset(
    reviews: &Path,
    registry: &ModelRegistry,
    keep_self_reviews: bool,
) -> Result<ReviewDataset> {
    let rows = data_io::read_review_rows(open_reader(reviews)?, registry, true)?;
    let (own, others): (Vec<_>, Vec<_>) = rows
        .into_iter()
        .partition(|r| r.judge == r.model_1 || r.judge == r.model_2);
    if keep_self_reviews {
        let mut all = others;
        all.extend(own);
        Ok(data_io::dataset_from_rows(&all, registry, true)?)
    } else {
        if !own.is_empty() {
            log::info!("ignoring {} self-review row(s) for scoring", own.len());
        }
        Ok(data_io::dataset_from_rows(&others, registry, false)?)
    }
}

fn write_review_dataset(dataset: &ReviewDataset, path: &Path) -> Result<()> {
    let rows = data_io::dataset_to_rows(dataset);
    data_io::write_review_rows(&rows, create_writer(path)?)?;
    Ok(())
}

pub fn simulate(config: &EngineConfig, paths: &Paths) -> Result<()> {
    let sim = config.sim_config();
    let (mut dataset, ground_truth) = simulate_dataset(&sim)?;
    dataset.sort_canonical();

    data_io::write_registry(dataset.registry(), create_writer(&paths.models())?)?;
    write_review_dataset(&dataset, &paths.reviews())?;
    data_io::write_ranking(&ground_truth, create_writer(&paths.ground_truth())?)?;
    write_manifest(paths, config, "simulate")?;
    eprintln!(
        "simulated {} records over {} models and {} questions -> {}",
        dataset.len(),
        sim.n_models,
        sim.n_questions,
        paths.reviews().display()
    );
    Ok(())
}

pub fn review(
    config: &EngineConfig,
    paths: &Paths,
    questions: &Path,
    answers: &Path,
) -> Result<()> {
    let question_set = data_io::read_question_set(open_reader(questions)?)?;
    // Registry either from config or from the distinct answering models.
    let registry = match config.registry()? {
        Some(r) => r,
        None => registry_from_answers(answers)?,
    };
    let answer_rows = data_io::read_answers(open_reader(answers)?, &registry)?;
    let pairs = build_pairs(&answer_rows, &config.pairing_strategy()?, config.seed)?;

    let options = config.collect_options();
    let (dataset, report) = match config.review.judge {
        JudgeKind::Synthetic => {
            let judge = SyntheticJudge::for_models(config.sim_config(), registry.models())?;
            collect_reviews(&pairs, &question_set, &answer_rows, &judge, &registry, &options)?
        }
        JudgeKind::Remote => {
            let mut clients = BTreeMap::new();
            for (model, endpoint) in &config.endpoints {
                clients.insert(ModelId::new(model.clone())?, ChatClient::new(endpoint.clone())?);
            }
            if clients.is_empty() {
                bail!("remote judging needs at least one [endpoints.<model>] section");
            }
            let mut judge = RemoteJudge::new(clients);
            if let Some(kind) = config.review.prompt_kind.fixed() {
                judge = judge.with_fixed_kind(kind);
            }
            collect_reviews(&pairs, &question_set, &answer_rows, &judge, &registry, &options)?
        }
    };

    data_io::write_registry(&registry, create_writer(&paths.models())?)?;
    write_review_dataset(&dataset, &paths.reviews())?;
    write_manifest(paths, config, "review")?;
    eprintln!(
        "collected {}/{} judgments ({} invalid verdicts, {} transport failures) -> {}",
        report.collected,
        report.requested,
        report.invalid_verdicts,
        report.transport_failures,
        paths.reviews().display()
    );
    for failure in &report.sample_failures {
        eprintln!("  failure: {failure}");
    }
    Ok(())
}

fn registry_from_answers(answers: &Path) -> Result<ModelRegistry> {
    // Answers cannot be parsed against an unknown registry, so pre-scan the
    // model_id column.
    #[derive(serde::Deserialize)]
    struct ModelOnly {
        model_id: String,
    }
    use std::io::BufRead;
    let mut models = BTreeSet::new();
    for (i, line) in open_reader(answers)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: ModelOnly = serde_json::from_str(&line)
            .with_context(|| format!("cannot parse answers line {}", i + 1))?;
        models.insert(row.model_id);
    }
    Ok(ModelRegistry::from_names(models)?)
}

pub fn optimize(config: &EngineConfig, paths: &Paths, reviews: &Path, models: &Path) -> Result<()> {
    let registry = read_registry_at(models)?;
    let dataset = read_dataset(reviews, &registry, false)?;
    let (weights, trace) = optimize_weights(&dataset, &config.opt_config())?;

    data_io::write_weights(&weights, create_writer(&paths.weights())?)?;
    let mut w = create_writer(&paths.trace())?;
    writeln!(w, "iteration,objective,loss")?;
    for (i, objective) in trace.objective.iter().enumerate() {
        writeln!(w, "{i},{objective},{}", 1.0 - objective)?;
    }
    write_manifest(paths, config, "optimize")?;
    eprintln!(
        "optimized over {} records: objective {:.6} after {} iteration(s), converged = {}",
        dataset.len(),
        trace.final_objective(),
        trace.objective.len() - 1,
        trace.converged
    );
    Ok(())
}

pub fn eliminate(config: &EngineConfig, paths: &Paths, reviews: &Path, models: &Path) -> Result<()> {
    let registry = read_registry_at(models)?;
    let dataset = read_dataset(reviews, &registry, false)?;
    let (ranking, state) = run_elimination(&dataset, &config.elimination_config())?;

    let selected = &state.per_round[state.selected_round];
    data_io::write_weights(&selected.weights, create_writer(&paths.weights())?)?;

    let mut w = create_writer(&paths.elimination())?;
    writeln!(w, "round,eliminated_model,final_loss")?;
    for (round, outcome) in state.per_round.iter().enumerate() {
        let victim = if round == 0 {
            ""
        } else {
            state
                .eliminated
                .get(round - 1)
                .map(|m| m.as_str())
                .unwrap_or("")
        };
        writeln!(w, "{round},{victim},{}", outcome.final_loss)?;
    }

    let eliminated: BTreeSet<ModelId> = state.eliminated.iter().cloned().collect();
    write_ranking_outputs(paths, &ranking, &selected.scores, &eliminated)?;
    write_manifest(paths, config, "eliminate")?;
    eprintln!(
        "eliminated {} of {} reviewers (selected round {} of {}, final loss {:.6})",
        state.eliminated.len(),
        registry.len(),
        state.selected_round,
        state.per_round.len() - 1,
        selected.final_loss
    );
    Ok(())
}

fn write_ranking_outputs(
    paths: &Paths,
    ranking: &Ranking,
    scores: &peerrank_core::Scores,
    eliminated: &BTreeSet<ModelId>,
) -> Result<()> {
    data_io::write_ranking(ranking, create_writer(&paths.ranking())?)?;
    let leaderboard = data_io::Leaderboard::build(ranking, scores, eliminated)?;
    leaderboard.write_json(create_writer(&paths.leaderboard_json())?)?;
    leaderboard.write_text(create_writer(&paths.leaderboard_txt())?)?;
    Ok(())
}

pub fn rank(
    config: &EngineConfig,
    paths: &Paths,
    reviews: &Path,
    models: &Path,
    weights_path: Option<&Path>,
) -> Result<()> {
    let registry = read_registry_at(models)?;
    let dataset = read_dataset(reviews, &registry, false)?;

    let (weights, eliminated): (Weights, BTreeSet<ModelId>) = match weights_path {
        Some(path) => {
            let weights = data_io::read_weights(open_reader(path)?)?;
            // Models without a weight are eliminated reviewers: their
            // judgments are excluded but they are still ranked.
            let holders: BTreeSet<ModelId> = weights.model_ids().cloned().collect();
            let eliminated = registry
                .iter()
                .filter(|m| !holders.contains(*m))
                .cloned()
                .collect();
            (weights, eliminated)
        }
        None => (Weights::uniform(&registry), BTreeSet::new()),
    };

    let active: BTreeSet<ModelId> = weights.model_ids().cloned().collect();
    let filtered = dataset.filter_reviewers(&active);
    if filtered.len() < dataset.len() {
        log::info!(
            "excluded {} record(s) from reviewers without weights",
            dataset.len() - filtered.len()
        );
    }
    let scores = mechanism_scores(&filtered, &weights, &config.mechanism())?;
    let ranking = ranking_from_scores(&scores, &registry)?;
    write_ranking_outputs(paths, &ranking, &scores, &eliminated)?;
    write_manifest(paths, config, "rank")?;
    eprintln!("ranked {} models -> {}", registry.len(), paths.ranking().display());
    Ok(())
}

pub fn metrics(
    config: &EngineConfig,
    paths: &Paths,
    learned: &Path,
    reference: &Path,
    ks: &[usize],
    persistence: Scalar,
    csv: Option<&Path>,
) -> Result<()> {
    let learned_ranking = data_io::read_ranking(open_reader(learned)?)?;
    let reference_ranking = data_io::read_ranking(open_reader(reference)?)?;

    let ks: Vec<usize> = if ks.is_empty() {
        // Table-style defaults, restricted to the pool size.
        [8, 9, 10]
            .into_iter()
            .filter(|&k| k <= learned_ranking.len())
            .collect()
    } else {
        ks.to_vec()
    };

    let report = alignment_report(&learned_ranking, &reference_ranking, &ks, persistence)?;
    let json = serde_json::to_string_pretty(&report)?;
    let mut w = create_writer(&paths.metrics())?;
    writeln!(w, "{json}")?;
    println!("{json}");

    if let Some(csv_path) = csv {
        let mut w = create_writer(csv_path)?;
        let mut header = vec![
            "spearman".to_string(),
            "kendall".to_string(),
            "permutation_entropy".to_string(),
            "count_inversions".to_string(),
            "lis".to_string(),
        ];
        let mut row = vec![
            report.spearman.to_string(),
            report.kendall.to_string(),
            report.permutation_entropy.to_string(),
            report.count_inversions.to_string(),
            report.lis.to_string(),
        ];
        for (k, v) in &report.precision_at {
            header.push(format!("precision_at_{k}"));
            row.push(v.to_string());
        }
        for (k, v) in &report.rbp_at {
            header.push(format!("rbp_at_{k}"));
            row.push(v.to_string());
        }
        writeln!(w, "{}", header.join(","))?;
        writeln!(w, "{}", row.join(","))?;
    }
    write_manifest(paths, config, "metrics")?;
    Ok(())
}

fn write_pg_csv(
    path: &Path,
    order: &[ModelId],
    matrix: &peerrank_core::analysis::PreferenceGapMatrix<Scalar>,
) -> Result<()> {
    let mut w = create_writer(path)?;
    let header: Vec<&str> = std::iter::once("model")
        .chain(order.iter().map(|m| m.as_str()))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for i in order {
        let mut row = vec![i.as_str().to_string()];
        for j in order {
            let cell = matrix
                .pg
                .get(&(i.clone(), j.clone()))
                .map(|v| v.to_string())
                .unwrap_or_default();
            row.push(cell);
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn pg(
    config: &EngineConfig,
    paths: &Paths,
    reviews: &Path,
    models: &Path,
    weights_path: Option<&Path>,
    subset: &[String],
) -> Result<()> {
    let registry = read_registry_at(models)?;
    let dataset = read_dataset(reviews, &registry, true)?;

    let order: Vec<ModelId> = if subset.is_empty() {
        registry.iter().cloned().collect()
    } else {
        let subset: Vec<ModelId> = subset
            .iter()
            .map(|s| ModelId::new(s.clone()))
            .collect::<Result<_, _>>()?;
        for m in &subset {
            if !registry.contains(m) {
                return Err(anyhow!(peerrank_core::Error::Schema(format!(
                    "subset model {m:?} not in registry"
                ))));
            }
        }
        subset
    };

    let matrix = peerrank_core::analysis::preference_gap_matrix::<Scalar>(&dataset)?;
    write_pg_csv(&paths.pg_matrix(), &order, &matrix)?;

    if let Some(path) = weights_path {
        let weights = data_io::read_weights(open_reader(path)?)?;
        let reweighted = peerrank_core::analysis::reweighted_pg_matrix(&dataset, &weights)?;
        write_pg_csv(&paths.pg_reweighted(), &order, &reweighted)?;
    }

    let mut w = create_writer(&paths.pg_coverage())?;
    writeln!(w, "unsupported ordered pairs: {}", matrix.missing.len())?;
    for (i, j) in &matrix.missing {
        writeln!(w, "{i},{j}")?;
    }
    write_manifest(paths, config, "pg")?;
    eprintln!(
        "preference gaps for {} model(s), {} unsupported pair(s) -> {}",
        order.len(),
        matrix.missing.len(),
        paths.pg_matrix().display()
    );
    Ok(())
}

/// Generate answers for every registry model against a question file using
/// configured endpoints; a thin helper around the gateway, exposed for
/// completeness of the remote pipeline.
pub fn generate(config: &EngineConfig, paths: &Paths, questions: &Path) -> Result<()> {
    let question_set = data_io::read_question_set(open_reader(questions)?)?;
    let registry = config
        .registry()?
        .ok_or_else(|| anyhow!("answer generation needs [registry].models in the config"))?;
    let mut answers: Vec<Answer> = Vec::new();
    for model in registry.iter() {
        let endpoint = config.endpoints.get(model.as_str()).ok_or_else(|| {
            anyhow!("no [endpoints.{}] section for contestant model", model.as_str())
        })?;
        let client = ChatClient::new(endpoint.clone())?;
        answers.extend(peerrank_judge::generate_answers(
            &client,
            question_set.questions(),
            model,
        )?);
    }
    data_io::write_registry(&registry, create_writer(&paths.models())?)?;
    data_io::write_answers(&answers, create_writer(&paths.answers())?)?;
    write_manifest(paths, config, "generate")?;
    eprintln!(
        "generated {} answer(s) for {} model(s)",
        answers.len(),
        registry.len()
    );
    Ok(())
}
