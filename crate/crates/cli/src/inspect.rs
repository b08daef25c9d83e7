use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Result};
use madam_rag::baselines::MethodTrace;
use madam_rag::eval::TranscriptRecord;
use madam_rag::jsonl::read_jsonl;
use madam_rag::model::{DebateTranscript, StopReason};

pub fn inspect(path: &Path, id: &str) -> Result<()> {
    let records: Vec<TranscriptRecord> = read_jsonl(path)?;
    if records.is_empty() {
        bail!("NotFound: {} contains no transcripts", path.display());
    }
    let Some(record) = records.iter().find(|r| r.instance_id == id) else {
        bail!("NotFound: no transcript for instance {id:?} in {}", path.display());
    };
    print!("{}", render(record));
    Ok(())
}

fn render_debate(out: &mut String, t: &DebateTranscript) {
    for r in &t.rounds {
        let order: Vec<String> = r.shuffle_permutation.iter().map(|k| (k + 1).to_string()).collect();
        let _ = writeln!(out, "round {} (aggregator order: agents {})", r.round, order.join(", "));
        for resp in &r.responses {
            let flag = if resp.degraded { " [degraded]" } else { "" };
            let _ = writeln!(out, "  agent {}: {}{flag}", resp.agent_index + 1, resp.answer);
        }
        let answers = if r.aggregate.answers.is_empty() {
            "(none)".to_string()
        } else {
            r.aggregate.answers.join(", ")
        };
        let _ = writeln!(out, "  aggregate: {answers}");
        if !r.aggregate.explanation.is_empty() {
            let _ = writeln!(out, "  explanation: {}", r.aggregate.explanation);
        }
    }
    let reason = match t.stop_reason {
        StopReason::Converged => "converged",
        StopReason::MaxRounds => "round limit reached",
        StopReason::Aborted => "aborted",
    };
    let _ = writeln!(out, "stopped after round {}: {reason}", t.stop_round);
}

pub fn render(record: &TranscriptRecord) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "instance {} ({})", record.instance_id, record.method);
    match &record.trace {
        MethodTrace::Debate(t) => render_debate(&mut out, t),
        MethodTrace::Chain(c) => {
            for step in &c.steps {
                let _ = writeln!(out, "[{}]\n{}", step.label, step.reply);
            }
        }
    }
    let calls = record.trace.usage();
    let input: u64 = calls.iter().map(|c| c.input_tokens).sum();
    let output: u64 = calls.iter().map(|c| c.output_tokens).sum();
    let _ = writeln!(out, "calls: {}  input tokens: {input}  output tokens: {output}", calls.len());
    if let Some(e) = &record.error {
        let _ = writeln!(out, "error: {e}");
    }
    out
}
