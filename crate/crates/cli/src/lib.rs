//! Command-line front end for the peer-review ranking engine.
//!
//! Subcommands wire the pipeline end to end: `simulate` or `review` produce
//! a review dataset, `optimize`/`eliminate` learn confidence weights,
//! `rank` emits leaderboards, `metrics` scores a learned ranking against a
//! reference, and `pg` computes reviewer-bias matrices. All randomness flows
//! from one global seed, so identical (config, seed) runs produce
//! byte-identical artifacts.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::Paths;
use config::EngineConfig;

#[derive(Parser, Debug)]
#[command(
    name = "peerrank",
    version,
    about = "Rank a pool of models from their pairwise peer reviews"
)]
struct Cli {
    /// TOML config file; defaults are used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Global seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic review dataset with known ground truth.
    Simulate,
    /// Build battle pairs from answers and judge them.
    Review {
        /// questions.jsonl path (default: <out>/questions.jsonl).
        #[arg(long)]
        questions: Option<PathBuf>,
        /// answers.jsonl path (default: <out>/answers.jsonl).
        #[arg(long)]
        answers: Option<PathBuf>,
    },
    /// Ask every configured contestant endpoint to answer the questions.
    Generate {
        #[arg(long)]
        questions: Option<PathBuf>,
    },
    /// Learn confidence weights by consistency optimization.
    Optimize {
        #[arg(long)]
        reviews: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Iteratively eliminate low-scoring reviewers, then rank.
    Eliminate {
        #[arg(long)]
        reviews: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Score the pool and emit ranking plus leaderboards.
    Rank {
        #[arg(long)]
        reviews: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
        /// weights.json from a previous optimize/eliminate run; uniform
        /// weights when absent.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Compare a learned ranking against a reference ranking.
    Metrics {
        #[arg(long)]
        learned: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Depths for precision@K / RBP@K (default: 8,9,10 clipped to m).
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
        /// RBP persistence parameter.
        #[arg(long, default_value_t = 0.8)]
        rbp_persistence: f64,
        /// Also write the report as a one-row CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Preference-gap bias matrices (requires self-review records).
    Pg {
        #[arg(long)]
        reviews: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
        /// weights.json for the re-weighted matrix.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Restrict rows/columns to these model ids.
        #[arg(long, value_delimiter = ',')]
        subset: Vec<String>,
    },
}

/// Exit code classes: 0 success, 1 I/O or transport failure, 2 schema or
/// argument error.
fn exit_code_for(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(core_err) = cause.downcast_ref::<peerrank_core::Error>() {
            return match core_err {
                peerrank_core::Error::Schema(_)
                | peerrank_core::Error::Parse { .. }
                | peerrank_core::Error::Argument(_)
                | peerrank_core::Error::Degenerate(_)
                | peerrank_core::Error::CannotEliminate(_) => 2,
                peerrank_core::Error::Io(_) | peerrank_core::Error::Json(_) => 1,
            };
        }
        if let Some(gateway_err) = cause.downcast_ref::<peerrank_judge::GatewayError>() {
            return match gateway_err {
                peerrank_judge::GatewayError::Argument(_)
                | peerrank_judge::GatewayError::InvalidVerdict(_) => 2,
                peerrank_judge::GatewayError::Transport(_) => 1,
            };
        }
        if cause.downcast_ref::<toml::de::Error>().is_some() {
            return 2;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 1;
        }
    }
    1
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let mut config = match &cli.config {
        Some(path) => EngineConfig::load(path)?,
        None => EngineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.display().to_string();
    }
    let paths = Paths::new(std::path::Path::new(&config.out))?;

    match cli.command {
        Command::Simulate => commands::simulate(&config, &paths),
        Command::Review { questions, answers } => {
            let questions = questions.unwrap_or_else(|| paths.questions());
            let answers = answers.unwrap_or_else(|| paths.answers());
            commands::review(&config, &paths, &questions, &answers)
        }
        Command::Generate { questions } => {
            let questions = questions.unwrap_or_else(|| paths.questions());
            commands::generate(&config, &paths, &questions)
        }
        Command::Optimize { reviews, models } => {
            let reviews = reviews.unwrap_or_else(|| paths.reviews());
            let models = models.unwrap_or_else(|| paths.models());
            commands::optimize(&config, &paths, &reviews, &models)
        }
        Command::Eliminate { reviews, models } => {
            let reviews = reviews.unwrap_or_else(|| paths.reviews());
            let models = models.unwrap_or_else(|| paths.models());
            commands::eliminate(&config, &paths, &reviews, &models)
        }
        Command::Rank {
            reviews,
            models,
            weights,
        } => {
            let reviews = reviews.unwrap_or_else(|| paths.reviews());
            let models = models.unwrap_or_else(|| paths.models());
            commands::rank(&config, &paths, &reviews, &models, weights.as_deref())
        }
        Command::Metrics {
            learned,
            reference,
            k,
            rbp_persistence,
            csv,
        } => commands::metrics(
            &config,
            &paths,
            &learned,
            &reference,
            &k,
            rbp_persistence,
            csv.as_deref(),
        ),
        Command::Pg {
            reviews,
            models,
            weights,
            subset,
        } => {
            let reviews = reviews.unwrap_or_else(|| paths.reviews());
            let models = models.unwrap_or_else(|| paths.models());
            commands::pg(&config, &paths, &reviews, &models, weights.as_deref(), &subset)
        }
    }
}

/// Parses `argv` and runs the selected subcommand, returning the process
/// exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version print to stdout and exit 0; usage errors go
            // to stderr with exit 2.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err:#}");
            exit_code_for(&err)
        }
    }
}
