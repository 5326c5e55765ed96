//! `wristarc` — command-line front end of the activity recognition chain.
//!
//! One TOML config file (see [`config::PipelineConfig`]) plus a global seed
//! drive the whole pipeline; every command reads artifacts from one
//! directory and writes its own into another, so a full experiment is a
//! sequence of `synth → preprocess → train → eval → report` invocations.
//! Exit codes are a stable scripting contract: 0 success, 2 configuration
//! error, 3 data error, 4 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use wristarc::data_model::Scenario;
use wristarc::error::Result;
use wristarc::eval::{Classifier, Segmentation};

mod commands;
mod config;
mod corpus;

use config::PipelineConfig;

#[derive(Parser)]
#[command(
    name = "wristarc",
    version,
    about = "Upper-limb activity recognition chain for dual-wrist IMU recordings"
)]
struct Cli {
    /// Pipeline config file (TOML); library defaults apply when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override the config's global seed.
    #[arg(long, global = true, value_name = "SEED")]
    seed: Option<u64>,

    /// Output directory; each command has a config-derived default.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled corpus.
    Synth,

    /// Validate recordings and rewrite them canonically aligned.
    Ingest {
        /// Corpus directory to read.
        #[arg(long = "in", value_name = "DIR")]
        input: Option<PathBuf>,
    },

    /// Remove slow drift (and optionally re-derive attitude).
    Preprocess {
        /// Corpus directory to read.
        #[arg(long = "in", value_name = "DIR")]
        input: Option<PathBuf>,
    },

    /// Carve recordings into candidate segments and label them.
    Segment {
        /// Corpus directory to read.
        #[arg(long = "in", value_name = "DIR")]
        input: Option<PathBuf>,
        /// Narrow each segment to the margin around its peak.
        #[arg(long)]
        spot: bool,
    },

    /// Export per-segment statistical features as CSV.
    Features {
        /// Corpus directory to read.
        #[arg(long = "in", value_name = "DIR")]
        input: Option<PathBuf>,
        /// Scenario: L1 (constrained) or L2 (unconstrained).
        #[arg(long, value_name = "L1|L2")]
        scenario: String,
        /// Segmentation: action or spotting.
        #[arg(long, value_name = "action|spotting")]
        segmentation: String,
    },

    /// Train one classifier cell and save the model.
    Train {
        /// Corpus directory to read.
        #[arg(long = "in", value_name = "DIR")]
        input: Option<PathBuf>,
        /// Scenario: L1 (constrained) or L2 (unconstrained).
        #[arg(long, value_name = "L1|L2")]
        scenario: String,
        /// Segmentation: action or spotting.
        #[arg(long, value_name = "action|spotting")]
        segmentation: String,
        /// Classifier: svm or cnn.
        #[arg(long, value_name = "svm|cnn")]
        classifier: String,
    },

    /// Score a saved model on the held-out test part.
    Eval {
        /// Corpus directory to read.
        #[arg(long = "in", value_name = "DIR")]
        input: Option<PathBuf>,
        /// Model file written by `train`.
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        /// Scenario: L1 (constrained) or L2 (unconstrained).
        #[arg(long, value_name = "L1|L2")]
        scenario: String,
        /// Segmentation: action or spotting.
        #[arg(long, value_name = "action|spotting")]
        segmentation: String,
    },

    /// Merge cell results into the accuracy table.
    Report {
        /// Cell result files or directories of `*.cell.csv`.
        #[arg(value_name = "RESULTS")]
        results: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let cfg = PipelineConfig::load(cli.config.as_deref(), cli.seed)?;
    let out = |default: PathBuf| cli.out.clone().unwrap_or(default);
    let input = |given: Option<PathBuf>, default: PathBuf| given.unwrap_or(default);

    match cli.command {
        Command::Synth => commands::cmd_synth(&cfg, &out(cfg.paths.corpus.clone())),
        Command::Ingest { input: i } => commands::cmd_ingest(
            &input(i, cfg.paths.corpus.clone()),
            &out(cfg.paths.ingested()),
        ),
        Command::Preprocess { input: i } => commands::cmd_preprocess(
            &cfg,
            &input(i, cfg.paths.corpus.clone()),
            &out(cfg.paths.preprocessed()),
        ),
        Command::Segment { input: i, spot } => commands::cmd_segment(
            &cfg,
            &input(i, cfg.paths.preprocessed()),
            &out(cfg.paths.segments()),
            spot,
        ),
        Command::Features {
            input: i,
            scenario,
            segmentation,
        } => commands::cmd_features(
            &cfg,
            &input(i, cfg.paths.preprocessed()),
            &out(cfg.paths.features()),
            Scenario::from_str(&scenario)?,
            Segmentation::from_str(&segmentation)?,
        ),
        Command::Train {
            input: i,
            scenario,
            segmentation,
            classifier,
        } => commands::cmd_train(
            &cfg,
            &input(i, cfg.paths.preprocessed()),
            &out(cfg.paths.models()),
            Scenario::from_str(&scenario)?,
            Segmentation::from_str(&segmentation)?,
            Classifier::from_str(&classifier)?,
        ),
        Command::Eval {
            input: i,
            model,
            scenario,
            segmentation,
        } => commands::cmd_eval(
            &cfg,
            &input(i, cfg.paths.preprocessed()),
            &model,
            &out(cfg.paths.results()),
            Scenario::from_str(&scenario)?,
            Segmentation::from_str(&segmentation)?,
        ),
        Command::Report { results } => {
            let inputs = if results.is_empty() {
                vec![cfg.paths.results()]
            } else {
                results
            };
            commands::cmd_report(&inputs, &out(cfg.paths.report()))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}
