use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use madam_rag::backend::{
    ChatBackend, InFlightLimit, LiveBackend, LiveConfig, RecordingBackend, ReplayBackend, Script,
    ScriptedBackend,
};
use madam_rag::baselines::MethodRunner;
use madam_rag::dataset::{
    build_corpus, compute_stats, load_noise_pool, load_release, load_seed_entries,
    make_imbalance_subset, make_misinfo_subset, ConstructionPolicy, CorpusStats, DocumentSource,
    LocalCorpusSource,
};
use madam_rag::eval::{evaluate_corpus, judge_predictions, EmMode, EvalConfig, EvalReport, RunMetadata};
use madam_rag::jsonl::{load_corpus, read_jsonl, save_corpus, write_jsonl};
use madam_rag::model::{DebateConfig, RamDocsInstance};
use madam_rag::prompting::TemplateSet;
use serde::Deserialize;

use crate::config::{parse_em_mode, parse_method, BackendChoice, FileConfig, RunConfig};
use crate::{BuildArgs, EvalArgs, RunArgs, StatsArgs, SubsetArgs};

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

fn distractors(path: Option<&Path>) -> Result<Vec<String>> {
    path.map_or(Ok(Vec::new()), read_lines)
}

fn corpus_path(flag: Option<PathBuf>, file: &FileConfig) -> Result<PathBuf> {
    match flag.or_else(|| file.paths.corpus.clone()) {
        Some(p) => Ok(p),
        None => bail!("no corpus given; pass --corpus <path>"),
    }
}

fn load(path: &Path) -> Result<Vec<RamDocsInstance>> {
    load_corpus(path).with_context(|| format!("loading corpus {}", path.display()))
}

pub fn build(args: BuildArgs, _file: &FileConfig) -> Result<()> {
    let mut policy = match &args.policy {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading policy {}", p.display()))?;
            toml::from_str::<ConstructionPolicy>(&text).with_context(|| format!("parsing policy {}", p.display()))?
        }
        None => ConstructionPolicy::default(),
    };
    if let Some(seed) = args.seed {
        policy.rng_seed = seed;
    }
    policy.validate()?;

    let mut entries = load_seed_entries(&args.seeds)?;
    if let Some(root) = &args.source {
        LocalCorpusSource::new(root)
            .fill(&mut entries)
            .with_context(|| format!("reading documents under {}", root.display()))?;
    }
    let noise = load_noise_pool(&args.noise, policy.chunk_word_budget)?;
    let (corpus, failures) = build_corpus(&entries, &policy, &noise, &distractors(args.distractors.as_deref())?);
    save_corpus(&args.out, &corpus)?;
    for f in &failures {
        eprintln!("skipped {}: {}", f.entry_id, f.error);
    }
    println!("built={} skipped={} out={}", corpus.len(), failures.len(), args.out.display());
    Ok(())
}

pub fn subset(args: SubsetArgs, file: &FileConfig) -> Result<()> {
    let corpus = load(&corpus_path(args.corpus, file)?)?;
    let outcome = match args.mode.as_str() {
        "imbalance" => make_imbalance_subset(&corpus, args.level)?,
        _ => make_misinfo_subset(
            &corpus,
            args.level,
            &distractors(args.distractors.as_deref())?,
            madam_rag::model::DEFAULT_CHUNK_WORDS,
        )?,
    };
    save_corpus(&args.out, &outcome.instances)?;
    for s in &outcome.skipped {
        eprintln!("skipped {}: {}", s.id, s.reason);
    }
    println!(
        "mode={} level={} kept={} skipped={} out={}",
        args.mode,
        args.level,
        outcome.instances.len(),
        outcome.skipped.len(),
        args.out.display()
    );
    Ok(())
}

fn stats_line(s: &CorpusStats) -> String {
    let mut line = format!("instances={}", s.instances);
    for (name, d) in s.dimensions() {
        line.push_str(&format!(" {name}={:.4}", d.mean));
    }
    line
}

fn stats_table(s: &CorpusStats) -> String {
    let mut out = format!("{:<28} {:>8}  histogram (value:count)\n", "dimension", "mean");
    for (name, d) in s.dimensions() {
        let hist: Vec<String> = d.histogram.iter().map(|(v, c)| format!("{v}:{c}")).collect();
        out.push_str(&format!("{name:<28} {:>8.4}  {}\n", d.mean, hist.join(" ")));
    }
    out
}

pub fn stats(args: StatsArgs) -> Result<()> {
    let corpus = if args.release {
        load_release(&args.path).with_context(|| format!("loading release {}", args.path.display()))?
    } else {
        load(&args.path)?
    };
    let s = compute_stats(&corpus)?;
    println!("{}", stats_line(&s));
    if args.table {
        print!("{}", stats_table(&s));
    }
    Ok(())
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn open_backend(cfg: &RunConfig, record: bool) -> Result<Arc<dyn ChatBackend>> {
    let backend: Arc<dyn ChatBackend> = match cfg.backend {
        BackendChoice::Live => {
            let mut live = LiveConfig::new(cfg.endpoint.clone().expect("checked during resolution"));
            match std::env::var(&cfg.api_key_env) {
                Ok(key) if !key.is_empty() => live = live.with_api_key(key),
                _ => tracing::warn!(var = %cfg.api_key_env, "no API key in the environment; sending requests without one"),
            }
            Arc::new(LiveBackend::new(live).context("building HTTP client")?)
        }
        BackendChoice::Scripted => {
            let path = cfg.script.as_ref().expect("checked during resolution");
            let script = Script::load(path).with_context(|| format!("loading script {}", path.display()))?;
            Arc::new(ScriptedBackend::new(script))
        }
        BackendChoice::Replay => {
            let path = cfg.recording.as_ref().expect("checked during resolution");
            Arc::new(ReplayBackend::load(path).with_context(|| format!("loading recording {}", path.display()))?)
        }
    };
    let backend = if record {
        let Some(path) = &cfg.recording else {
            bail!("record needs --recording <path>");
        };
        Arc::new(RecordingBackend::open(backend, path).with_context(|| format!("opening {}", path.display()))?)
    } else {
        backend
    };
    Ok(Arc::new(InFlightLimit::new(backend, cfg.max_in_flight)))
}

fn write_report(report: &EvalReport, path: Option<&Path>, table: bool) -> Result<()> {
    if let Some(path) = path {
        std::fs::write(path, report.to_jsonl()).with_context(|| format!("writing report {}", path.display()))?;
    }
    println!("{}", report.summary.line());
    if table {
        let s = &report.summary;
        println!("{:<20} {:>10}", "metric", "value");
        for (name, v) in [
            ("em", s.em),
            ("precision", s.precision),
            ("recall", s.recall),
            ("f1", s.f1),
            ("mean_input_tokens", s.mean_input_tokens),
            ("mean_output_tokens", s.mean_output_tokens),
            ("degraded_rate", s.degraded_rate),
        ] {
            println!("{name:<20} {v:>10.4}");
        }
        println!("{:<20} {:>10}", "backend_calls", s.total_backend_calls);
        println!("{:<20} {:>10}", "errors", s.errors);
    }
    Ok(())
}

pub fn run(mut args: RunArgs, file: &FileConfig, record: bool) -> Result<()> {
    let table = args.table;
    if record {
        match args.backend.as_deref().or(file.backend.kind.as_deref()) {
            None => args.backend = Some("live".into()),
            Some("live") => {}
            Some(other) => bail!("record proxies the live backend, not {other:?}"),
        }
    }
    let cfg = RunConfig::resolve(args, file)?;
    let corpus = load(&cfg.corpus)?;
    let templates = match &cfg.templates {
        Some(dir) => TemplateSet::with_overrides(dir)?,
        None => TemplateSet::embedded(),
    };
    let backend = open_backend(&cfg, record)?;
    let runner = MethodRunner {
        method: cfg.method,
        templates,
        model_name: cfg.model.clone(),
        sampling: cfg.sampling,
        debate: DebateConfig {
            max_rounds: cfg.max_rounds,
            shuffle_seed: cfg.seed,
            convergence_comparison: cfg.convergence,
        },
        reflection_rounds: cfg.reflection_rounds,
    };
    // Wall-clock stamps only for live runs so offline outputs stay byte-identical.
    let live = cfg.backend == BackendChoice::Live;
    let mut eval_config = EvalConfig {
        em_mode: cfg.em_mode,
        concurrency: cfg.concurrency,
        metadata: RunMetadata {
            model_name: cfg.model.clone(),
            backend: cfg.backend.name().to_string(),
            shuffle_seed: cfg.seed,
            started_at: live.then(now),
            finished_at: None,
        },
    };

    let rt = tokio::runtime::Runtime::new()?;
    let (mut report, transcripts) = rt.block_on(evaluate_corpus(&corpus, &runner, backend.as_ref(), &eval_config));
    if live {
        eval_config.metadata.finished_at = Some(now());
        report.summary.metadata = eval_config.metadata;
    }

    if let Some(path) = &cfg.transcripts {
        write_jsonl(path, &transcripts)?;
    }
    write_report(&report, cfg.report.as_deref(), table)
}

#[derive(Deserialize)]
struct Prediction {
    instance_id: String,
    answers: Vec<String>,
}

pub fn eval(args: EvalArgs, file: &FileConfig) -> Result<()> {
    let corpus = load(&corpus_path(args.corpus, file)?)?;
    let Some(method) = args.method.as_deref().or(file.run.method.as_deref()) else {
        bail!("no method named; pass --method to label the report");
    };
    let method = parse_method(method)?;
    let em_mode = match args.em_mode.as_deref().or(file.run.em_mode.as_deref()) {
        Some(s) => parse_em_mode(s)?,
        None => EmMode::default(),
    };
    let preds: Vec<Prediction> = read_jsonl(&args.predictions)?;
    let preds: HashMap<String, Vec<String>> = preds.into_iter().map(|p| (p.instance_id, p.answers)).collect();
    let report = judge_predictions(&corpus, &preds, method, em_mode, RunMetadata::default());
    let report_path = args.report.or_else(|| file.paths.report.clone());
    write_report(&report, report_path.as_deref(), args.table)
}
