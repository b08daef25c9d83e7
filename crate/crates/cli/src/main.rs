//! `madam-rag`: build conflict corpora, run debates and baselines, score
//! them, and read the transcripts back.

mod commands;
mod config;
mod inspect;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use crate::config::FileConfig;

#[derive(Parser)]
#[command(name = "madam-rag", version, about)]
struct Cli {
    /// TOML config file; flags and MADAM_* variables override it.
    #[arg(long, global = true, env = "MADAM_CONFIG")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a corpus from seed entries and a noise pool.
    Build(BuildArgs),
    /// Derive a controlled-experiment subset from a corpus.
    Subset(SubsetArgs),
    /// Print per-instance means and histograms for a corpus.
    Stats(StatsArgs),
    /// Run one method over a corpus and score it.
    Run(RunArgs),
    /// Score pre-computed predictions.
    Eval(EvalArgs),
    /// Render one transcript for reading.
    Inspect(InspectArgs),
    /// Run against the live backend and record every exchange.
    Record(RunArgs),
}

#[derive(Args)]
pub struct BuildArgs {
    /// Seed entries (JSONL).
    #[arg(long)]
    pub seeds: PathBuf,
    /// Off-topic texts used as noise (JSONL of {id?, text, source?}).
    #[arg(long)]
    pub noise: PathBuf,
    /// Construction policy (TOML); missing keys keep their defaults.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Replacement entities used after sibling answers run out, one per line.
    #[arg(long)]
    pub distractors: Option<PathBuf>,
    /// Directory of pre-fetched texts keyed by disambiguated query; fills
    /// disambiguations that list no documents.
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[arg(long, env = "MADAM_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SubsetArgs {
    #[arg(long, env = "MADAM_CORPUS")]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_parser = ["imbalance", "misinfo"])]
    pub mode: String,
    /// Documents for the heavier answer (imbalance) or misinformation documents (misinfo), 1-3.
    #[arg(long)]
    pub level: usize,
    /// Fallback replacement entities for the misinfo mode, one per line.
    #[arg(long)]
    pub distractors: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct StatsArgs {
    /// Corpus file.
    pub path: PathBuf,
    /// Read the file in the published release layout.
    #[arg(long)]
    pub release: bool,
    /// Also print a table with histograms.
    #[arg(long)]
    pub table: bool,
}

#[derive(Args, Clone, Default)]
pub struct RunArgs {
    /// no-rag | concat | self-reflect | madam
    #[arg(long, env = "MADAM_METHOD")]
    pub method: Option<String>,
    /// live | scripted | replay
    #[arg(long, env = "MADAM_BACKEND")]
    pub backend: Option<String>,
    /// Script file for the scripted backend.
    #[arg(long, env = "MADAM_SCRIPT")]
    pub script: Option<PathBuf>,
    /// Recorded exchanges: read by the replay backend, appended to by `record`.
    #[arg(long, env = "MADAM_RECORDING")]
    pub recording: Option<PathBuf>,
    /// Chat-completions base URL for the live backend.
    #[arg(long, env = "MADAM_ENDPOINT")]
    pub endpoint: Option<String>,
    #[arg(long, env = "MADAM_MODEL")]
    pub model: Option<String>,
    /// Name of the environment variable holding the API key.
    #[arg(long, env = "MADAM_API_KEY_ENV")]
    pub api_key_env: Option<String>,
    #[arg(long, env = "MADAM_CORPUS")]
    pub corpus: Option<PathBuf>,
    /// Where to write transcripts (JSONL).
    #[arg(long, env = "MADAM_TRANSCRIPTS")]
    pub transcripts: Option<PathBuf>,
    /// Where to write the report (JSONL, summary last).
    #[arg(long, env = "MADAM_REPORT")]
    pub report: Option<PathBuf>,
    #[arg(long, env = "MADAM_MAX_ROUNDS")]
    pub max_rounds: Option<usize>,
    /// Corpus shuffle seed; each instance derives its own.
    #[arg(long, env = "MADAM_SEED")]
    pub seed: Option<u64>,
    /// Instances evaluated at once.
    #[arg(long, env = "MADAM_CONCURRENCY")]
    pub concurrency: Option<usize>,
    /// Backend requests in flight at once.
    #[arg(long, env = "MADAM_MAX_IN_FLIGHT")]
    pub max_in_flight: Option<usize>,
    /// strict | lenient
    #[arg(long, env = "MADAM_EM_MODE")]
    pub em_mode: Option<String>,
    /// normalized-answer | raw-answer
    #[arg(long, env = "MADAM_CONVERGENCE")]
    pub convergence: Option<String>,
    #[arg(long, env = "MADAM_REFLECTION_ROUNDS")]
    pub reflection_rounds: Option<usize>,
    #[arg(long, env = "MADAM_TEMPERATURE")]
    pub temperature: Option<f64>,
    #[arg(long, env = "MADAM_MAX_OUTPUT_TOKENS")]
    pub max_output_tokens: Option<u32>,
    /// Directory of template overrides named `<template>.txt`.
    #[arg(long, env = "MADAM_TEMPLATES")]
    pub templates: Option<PathBuf>,
    /// Also print a table after the summary line.
    #[arg(long)]
    pub table: bool,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long, env = "MADAM_CORPUS")]
    pub corpus: Option<PathBuf>,
    /// JSONL of {instance_id, answers: [..]}.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Method name recorded in the report.
    #[arg(long, env = "MADAM_METHOD")]
    pub method: Option<String>,
    #[arg(long, env = "MADAM_EM_MODE")]
    pub em_mode: Option<String>,
    #[arg(long, env = "MADAM_REPORT")]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub table: bool,
}

#[derive(Args)]
pub struct InspectArgs {
    #[arg(long, env = "MADAM_TRANSCRIPTS")]
    pub transcripts: PathBuf,
    #[arg(long)]
    pub id: String,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("MADAM_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    let result = FileConfig::load(cli.config.as_deref()).and_then(|file| match cli.command {
        Command::Build(a) => commands::build(a, &file),
        Command::Subset(a) => commands::subset(a, &file),
        Command::Stats(a) => commands::stats(a),
        Command::Run(a) => commands::run(a, &file, false),
        Command::Eval(a) => commands::eval(a, &file),
        Command::Inspect(a) => inspect::inspect(&a.transcripts, &a.id),
        Command::Record(a) => commands::run(a, &file, true),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
