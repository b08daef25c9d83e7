use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use madam_rag::backend::{Sampling, DEFAULT_MAX_IN_FLIGHT};
use madam_rag::baselines::MethodKind;
use madam_rag::eval::EmMode;
use madam_rag::model::ConvergenceComparison;
use serde::Deserialize;

use crate::RunArgs;

pub const DEFAULT_API_KEY_ENV: &str = "MADAM_API_KEY";
pub const OFFLINE_MODEL: &str = "offline";

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    pub kind: Option<String>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub script: Option<PathBuf>,
    pub recording: Option<PathBuf>,
    pub api_key_env: Option<String>,
    pub max_in_flight: Option<usize>,
    pub temperature: Option<f64>,
    pub max_output_tokens: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub method: Option<String>,
    pub max_rounds: Option<usize>,
    pub seed: Option<u64>,
    pub concurrency: Option<usize>,
    pub em_mode: Option<String>,
    pub convergence: Option<String>,
    pub reflection_rounds: Option<usize>,
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub corpus: Option<PathBuf>,
    pub transcripts: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

/// Lowest-precedence settings, read from `--config`. Holds no credentials.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub backend: BackendSection,
    pub run: RunSection,
    pub paths: PathsSection,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendChoice {
    Live,
    Scripted,
    Replay,
}

impl BackendChoice {
    pub fn name(self) -> &'static str {
        match self {
            Self::Live => "live",
            Self::Scripted => "scripted",
            Self::Replay => "replay",
        }
    }
}

/// Everything `run` needs, after flag > env > file > default resolution.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub backend: BackendChoice,
    pub endpoint: Option<String>,
    pub model: String,
    pub api_key_env: String,
    pub script: Option<PathBuf>,
    pub recording: Option<PathBuf>,
    pub method: MethodKind,
    pub max_rounds: usize,
    pub seed: u64,
    pub concurrency: usize,
    pub max_in_flight: usize,
    pub em_mode: EmMode,
    pub convergence: ConvergenceComparison,
    pub reflection_rounds: usize,
    pub sampling: Sampling,
    pub templates: Option<PathBuf>,
    pub corpus: PathBuf,
    pub transcripts: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

pub fn parse_method(s: &str) -> Result<MethodKind> {
    s.parse().map_err(|e: String| anyhow::anyhow!("{e} (expected no-rag, concat, self-reflect, or madam)"))
}

pub fn parse_em_mode(s: &str) -> Result<EmMode> {
    s.parse().map_err(|e: String| anyhow::anyhow!("{e} (expected strict or lenient)"))
}

fn parse_convergence(s: &str) -> Result<ConvergenceComparison> {
    match s {
        "normalized-answer" | "normalized" => Ok(ConvergenceComparison::NormalizedAnswer),
        "raw-answer" | "raw" => Ok(ConvergenceComparison::RawAnswer),
        other => bail!("unknown convergence comparison {other:?} (expected normalized-answer or raw-answer)"),
    }
}

fn parse_backend(s: &str) -> Result<BackendChoice> {
    match s {
        "live" => Ok(BackendChoice::Live),
        "scripted" => Ok(BackendChoice::Scripted),
        "replay" => Ok(BackendChoice::Replay),
        other => bail!("unknown backend {other:?} (expected live, scripted, or replay)"),
    }
}

impl RunConfig {
    pub fn resolve(args: RunArgs, file: &FileConfig) -> Result<Self> {
        let b = &file.backend;
        let r = &file.run;
        let p = &file.paths;

        let backend = match args.backend.as_deref().or(b.kind.as_deref()) {
            Some(s) => parse_backend(s)?,
            None => bail!("no backend selected; pass --backend live|scripted|replay"),
        };
        let method = match args.method.as_deref().or(r.method.as_deref()) {
            Some(s) => parse_method(s)?,
            None => bail!("no method selected; pass --method no-rag|concat|self-reflect|madam"),
        };
        let Some(corpus) = args.corpus.or_else(|| p.corpus.clone()) else {
            bail!("no corpus given; pass --corpus <path>");
        };

        let endpoint = args.endpoint.or_else(|| b.endpoint.clone());
        let model = args.model.or_else(|| b.model.clone());
        let script = args.script.or_else(|| b.script.clone());
        let recording = args.recording.or_else(|| b.recording.clone());
        match backend {
            BackendChoice::Live => {
                if endpoint.is_none() || model.is_none() {
                    bail!("the live backend needs both --endpoint and --model");
                }
            }
            BackendChoice::Scripted if script.is_none() => bail!("the scripted backend needs --script"),
            BackendChoice::Replay if recording.is_none() => bail!("the replay backend needs --recording"),
            _ => {}
        }

        let defaults = Sampling::default();
        let config = Self {
            backend,
            endpoint,
            model: model.unwrap_or_else(|| OFFLINE_MODEL.to_string()),
            api_key_env: args
                .api_key_env
                .or_else(|| b.api_key_env.clone())
                .unwrap_or_else(|| DEFAULT_API_KEY_ENV.to_string()),
            script,
            recording,
            method,
            max_rounds: args.max_rounds.or(r.max_rounds).unwrap_or(3),
            seed: args.seed.or(r.seed).unwrap_or(0),
            concurrency: args.concurrency.or(r.concurrency).unwrap_or(4),
            max_in_flight: args.max_in_flight.or(b.max_in_flight).unwrap_or(DEFAULT_MAX_IN_FLIGHT),
            em_mode: match args.em_mode.as_deref().or(r.em_mode.as_deref()) {
                Some(s) => parse_em_mode(s)?,
                None => EmMode::default(),
            },
            convergence: match args.convergence.as_deref().or(r.convergence.as_deref()) {
                Some(s) => parse_convergence(s)?,
                None => ConvergenceComparison::default(),
            },
            reflection_rounds: args.reflection_rounds.or(r.reflection_rounds).unwrap_or(2),
            sampling: Sampling {
                temperature: args.temperature.or(b.temperature).unwrap_or(defaults.temperature),
                max_output_tokens: args
                    .max_output_tokens
                    .or(b.max_output_tokens)
                    .unwrap_or(defaults.max_output_tokens),
            },
            templates: args.templates.or_else(|| r.templates.clone()),
            corpus,
            transcripts: args.transcripts.or_else(|| p.transcripts.clone()),
            report: args.report.or_else(|| p.report.clone()),
        };
        if config.max_rounds == 0 {
            bail!("--max-rounds must be at least 1");
        }
        if config.concurrency == 0 || config.max_in_flight == 0 {
            bail!("--concurrency and --max-in-flight must be at least 1");
        }
        Ok(config)
    }
}
