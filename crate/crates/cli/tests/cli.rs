use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn madam(args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_madam-rag"));
    for (key, _) in std::env::vars() {
        if key.starts_with("MADAM_") {
            cmd.env_remove(key);
        }
    }
    cmd.args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run_fixture(method: &str, extra: &[&str]) -> Output {
    let script = fixture("jordan_script.json");
    let corpus = fixture("jordan.jsonl");
    let mut args = vec![
        "run",
        "--method",
        method,
        "--backend",
        "scripted",
        "--script",
        script.to_str().unwrap(),
        "--corpus",
        corpus.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    madam(&args)
}

fn field(line: &str, key: &str) -> String {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing from {line}"))
        .to_string()
}

#[test]
fn madam_run_on_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.jsonl");
    let transcripts = dir.path().join("t.jsonl");
    let out = run_fixture(
        "madam",
        &["--report", report.to_str().unwrap(), "--transcripts", transcripts.to_str().unwrap()],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let line = stdout(&out);
    assert_eq!(field(&line, "method"), "madam");
    assert_eq!(field(&line, "em"), "1.0000");
    assert_eq!(field(&line, "f1"), "1.0000");
    let report_text = std::fs::read_to_string(&report).unwrap();
    assert!(report_text.contains("\"total_backend_calls\":10"));

    let shown = madam(&["inspect", "--transcripts", transcripts.to_str().unwrap(), "--id", "jordan"]);
    assert!(shown.status.success());
    let text = stdout(&shown);
    for needle in ["agent 1: 1963", "agent 2: 1956", "agent 3: 1998", "agent 4: Unknown", "round 2", "converged"] {
        assert!(text.contains(needle), "{needle} missing from\n{text}");
    }
}

#[test]
fn concat_run_is_one_call() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.jsonl");
    let out = run_fixture("concat", &["--report", report.to_str().unwrap(), "--table"]);
    assert!(out.status.success());
    assert_eq!(field(&stdout(&out), "em"), "1.0000");
    assert!(std::fs::read_to_string(&report).unwrap().contains("\"total_backend_calls\":1"));
    assert!(stdout(&out).contains("backend_calls"));
}

#[test]
fn offline_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for k in 0..2 {
        let report = dir.path().join(format!("r{k}.jsonl"));
        let transcripts = dir.path().join(format!("t{k}.jsonl"));
        let out = run_fixture(
            "madam",
            &["--seed", "7", "--report", report.to_str().unwrap(), "--transcripts", transcripts.to_str().unwrap()],
        );
        assert!(out.status.success());
        outputs.push((stdout(&out), std::fs::read(&report).unwrap(), std::fs::read(&transcripts).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn missing_corpus_is_a_config_error() {
    let out = madam(&["run", "--method", "madam", "--backend", "scripted", "--script", "x.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--corpus"));
}

#[test]
fn config_file_and_env_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("madam.toml");
    std::fs::write(
        &config,
        format!(
            "[backend]\nkind = \"scripted\"\nscript = {:?}\n[run]\nmethod = \"no-rag\"\n[paths]\ncorpus = {:?}\n",
            fixture("jordan_script.json"),
            fixture("jordan.jsonl")
        ),
    )
    .unwrap();
    let out = madam(&["run", "--config", config.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(field(&stdout(&out), "method"), "no-rag");

    let mut cmd = Command::new(env!("CARGO_BIN_EXE_madam-rag"));
    let out = cmd
        .env("MADAM_METHOD", "concat")
        .args(["run", "--config", config.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(field(&stdout(&out), "method"), "concat");

    let mut cmd = Command::new(env!("CARGO_BIN_EXE_madam-rag"));
    let out = cmd
        .env("MADAM_METHOD", "concat")
        .args(["run", "--config", config.to_str().unwrap(), "--method", "self-reflect"])
        .output()
        .unwrap();
    assert_eq!(field(&stdout(&out), "method"), "self-reflect");
}

/// Answers every request with the same chat-completions reply.
fn mock_endpoint(reply: &'static str, connections: usize) -> String {
    use std::io::{BufRead, BufReader, Read, Write};
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    std::thread::spawn(move || {
        for _ in 0..connections {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line.trim().is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
            }
            reader.read_exact(&mut vec![0; length]).unwrap();
            let body = serde_json::json!({"choices": [{"message": {"content": reply}}]}).to_string();
            let mut stream = stream;
            write!(stream, "HTTP/1.1 200 OK\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}", body.len()).unwrap();
        }
    });
    url
}

#[test]
fn record_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let recording = dir.path().join("rec.jsonl");
    let corpus = fixture("jordan.jsonl");
    let endpoint = mock_endpoint("All Correct Answers: [\"1963\", \"1956\"]. Explanation: two people", 1);
    let common = ["--method", "concat", "--model", "m", "--corpus", corpus.to_str().unwrap(), "--recording", recording.to_str().unwrap()];

    let mut args = vec!["record", "--endpoint", endpoint.as_str()];
    args.extend(common);
    let live = madam(&args);
    assert!(live.status.success(), "{}", String::from_utf8_lossy(&live.stderr));
    assert_eq!(field(&stdout(&live), "em"), "1.0000");

    let mut args = vec!["run", "--backend", "replay"];
    args.extend(common);
    let replayed = madam(&args);
    assert!(replayed.status.success(), "{}", String::from_utf8_lossy(&replayed.stderr));
    assert_eq!(stdout(&live), stdout(&replayed));

    let missing = madam(&[
        "run", "--method", "madam", "--backend", "replay", "--recording",
        dir.path().join("none.jsonl").to_str().unwrap(), "--corpus", corpus.to_str().unwrap(),
    ]);
    assert!(!missing.status.success());
}

#[test]
fn inspect_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let out = madam(&["inspect", "--transcripts", empty.to_str().unwrap(), "--id", "x"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("NotFound"));

    let transcripts = dir.path().join("t.jsonl");
    run_fixture("madam", &["--transcripts", transcripts.to_str().unwrap()]);
    let out = madam(&["inspect", "--transcripts", transcripts.to_str().unwrap(), "--id", "nobody"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("NotFound"));
}

#[test]
fn eval_precomputed() {
    let dir = tempfile::tempdir().unwrap();
    let preds = dir.path().join("p.jsonl");
    std::fs::write(&preds, "{\"instance_id\":\"jordan\",\"answers\":[\"1963\",\"1956\",\"1998\"]}\n").unwrap();
    let corpus = fixture("jordan.jsonl");
    let base = ["eval", "--corpus", corpus.to_str().unwrap(), "--predictions", preds.to_str().unwrap(), "--method", "madam"];
    let strict = madam(&base);
    assert_eq!(field(&stdout(&strict), "em"), "0.0000");
    let mut lenient_args = base.to_vec();
    lenient_args.extend(["--em-mode", "lenient"]);
    let lenient = madam(&lenient_args);
    assert_eq!(field(&stdout(&lenient), "em_mode"), "lenient");
    assert_eq!(field(&stdout(&lenient), "em"), "0.0000");
}

#[test]
fn build_subset_stats_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let seeds = dir.path().join("seeds.jsonl");
    let noise = dir.path().join("noise.jsonl");
    let mut lines = String::new();
    for e in 0..20 {
        lines.push_str(&format!(
            "{{\"id\":\"q{e}\",\"ambiguous_query\":\"Which year for {e}?\",\"disambiguations\":[{{\"answer\":\"{a}\",\"query\":\"first {e}\",\"documents\":[\"it began in {a} at the river\",\"records from {a} survive\"]}},{{\"answer\":\"{b}\",\"query\":\"second {e}\",\"documents\":[\"the second started in {b}\"]}}]}}\n",
            a = 1900 + e,
            b = 1800 + e
        ));
    }
    std::fs::write(&seeds, lines).unwrap();
    std::fs::write(&noise, "{\"text\":\"gardens and weather\"}\n{\"text\":\"violin lessons\"}\n{\"text\":\"coffee recipes\"}\n").unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let args = |out: &Path| {
        vec![
            "build".to_string(), "--seeds".into(), seeds.to_str().unwrap().into(), "--noise".into(),
            noise.to_str().unwrap().into(), "--seed".into(), "5".into(), "--out".into(), out.to_str().unwrap().into(),
        ]
    };
    let a: Vec<String> = args(&corpus);
    let out = madam(&a.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(field(&stdout(&out), "built"), "20");
    let again = dir.path().join("again.jsonl");
    let b: Vec<String> = args(&again);
    madam(&b.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(std::fs::read(&corpus).unwrap(), std::fs::read(&again).unwrap());

    let stats = madam(&["stats", corpus.to_str().unwrap(), "--table"]);
    assert!(stats.status.success());
    assert_eq!(field(&stdout(&stats), "instances"), "20");
    assert!(stdout(&stats).contains("docs_per_gold_answer"));

    let sub = dir.path().join("sub.jsonl");
    let out = madam(&[
        "subset", "--corpus", fixture("jordan.jsonl").to_str().unwrap(), "--mode", "misinfo", "--level", "1",
        "--out", sub.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(field(&stdout(&out), "kept"), "1");
    let out = madam(&[
        "subset", "--corpus", fixture("jordan.jsonl").to_str().unwrap(), "--mode", "imbalance", "--level", "4",
        "--out", sub.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
}

#[test]
fn help_lists_every_flag() {
    let run_help = stdout(&madam(&["run", "--help"]));
    for flag in [
        "--method", "--backend", "--script", "--recording", "--endpoint", "--model", "--corpus", "--transcripts",
        "--report", "--max-rounds", "--seed", "--concurrency", "--em-mode", "--convergence", "--reflection-rounds",
        "--templates", "--table", "--config",
    ] {
        assert!(run_help.contains(flag), "run --help lacks {flag}");
    }
    let build_help = stdout(&madam(&["build", "--help"]));
    for flag in ["--seeds", "--noise", "--policy", "--seed", "--out"] {
        assert!(build_help.contains(flag), "build --help lacks {flag}");
    }
    let subset_help = stdout(&madam(&["subset", "--help"]));
    for flag in ["--mode", "--level"] {
        assert!(subset_help.contains(flag), "subset --help lacks {flag}");
    }
    let top = stdout(&madam(&["--help"]));
    for cmd in ["build", "subset", "stats", "run", "eval", "inspect", "record"] {
        assert!(top.contains(cmd), "--help lacks {cmd}");
    }
}
