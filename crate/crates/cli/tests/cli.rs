use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qagen::metrics::{MetricsReport, PipelineMetrics};
use qagen_cli::commands::{DedupFile, RetrievalFile, RunFile};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn qagen(work: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qagen"))
        .arg("--config")
        .arg(fixture("run.toml"))
        .arg("--work-dir")
        .arg(work)
        .args(args)
        .output()
        .unwrap()
}

fn read<T: serde::de::DeserializeOwned>(path: PathBuf) -> T {
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{e}: {text}"))
}

#[test]
fn eval_before_train_names_the_missing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = qagen(dir.path(), &["eval", "--pipeline", "expertgenqa"]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "dependency");
    assert_eq!(err["requires"], "train");
}

#[test]
fn generate_before_ingest_names_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let out = qagen(dir.path(), &["generate", "--pipeline", "fewshot"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["requires"], "ingest");
}

#[test]
fn bad_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["--set", "generation.k=0", "ingest"][..], &["--set", "nosuch.key=1", "ingest"]] {
        let out = qagen(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert_eq!(stderr_json(&out)["error"], "config");
    }
}

#[test]
fn staged_commands_follow_the_count_law() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path();
    assert!(qagen(w, &["ingest"]).status.success());
    for (n, k, want) in [("10", "3", 405u64), ("3", "2", 270), ("3", "1", 135)] {
        let out = qagen(w, &["--n", n, "--k", k, "generate", "--pipeline", "expertgenqa"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let run: RunFile = read(w.join("expertgenqa/run.json"));
        assert_eq!(run.report.records_emitted, want);
        assert_eq!(run.report.calls_failed, 0);
    }
    let out = qagen(w, &["dedup", "--pipeline", "expertgenqa"]);
    assert!(out.status.success());
    let d: DedupFile = read(w.join("expertgenqa/dedup.json"));
    assert_eq!(d.input, 135);
    assert_eq!(d.kept + d.dropped_within + d.dropped_against_test, d.input);
    assert!(d.kept > 0);
}

#[test]
fn full_run_produces_a_consistent_report() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path();
    let out = qagen(w, &["run"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("top-1"), "{stdout}");

    let report: MetricsReport = read(w.join("report.json"));
    assert_eq!(report.pipelines.len(), 3);
    assert!(report.baseline_retrieval.is_some());
    assert_eq!(report.config["provider"]["seed"], 7);
    for (p, m) in &report.pipelines {
        let on_disk: PipelineMetrics = read(w.join(format!("{p}/metrics.json")));
        assert_eq!(on_disk.efficiency, m.efficiency);
        let eff = m.efficiency.as_ref().unwrap();
        assert!(eff.unique_after_dedup <= eff.llm_calls);
        let tc = m.coverage.as_ref().unwrap().tc;
        assert!((0.0..=1.0).contains(&tc));
        let pref = m.preference.as_ref().unwrap();
        assert!(pref.mean_reward_gap >= 0.0);
        assert_eq!(pref.questions, 20);
        let bloom = m.bloom.as_ref().unwrap();
        assert_eq!(bloom.counts.values().sum::<usize>(), bloom.classified);
        let r = m.retrieval.as_ref().unwrap();
        assert!(r.top_k_accuracy[&1] <= r.top_k_accuracy[&5]);
        let ret: RetrievalFile = read(w.join(format!("{p}/retrieval.json")));
        assert_eq!(&ret.trained, r);
        assert!(w.join(format!("{p}/bloom.csv")).is_file());
        assert!(w.join(format!("{p}/preference.csv")).is_file());
    }

    let status = qagen(w, &["status"]);
    let text = String::from_utf8_lossy(&status.stdout);
    assert_eq!(text.matches("eval:done").count(), 3, "{text}");

    let stage_files = ["expertgenqa/generated.jsonl", "expertgenqa/run.json", "expertgenqa/dedup.json", "report.json"];
    let before: Vec<Vec<u8>> = stage_files.iter().map(|f| std::fs::read(w.join(f)).unwrap()).collect();
    for stage in ["generate", "dedup"] {
        assert!(qagen(w, &[stage, "--pipeline", "expertgenqa"]).status.success());
    }
    assert!(qagen(w, &["report"]).status.success());
    for (f, b) in stage_files.iter().zip(&before) {
        assert_eq!(&std::fs::read(w.join(f)).unwrap(), b, "{f} changed on rerun");
    }
    let usage: qagen_cli::commands::UsageFile = read(w.join("expertgenqa/usage.json"));
    assert!(usage.usage.cache_hits > 0);
}

#[test]
fn documents_directory_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let docs = dir.path().join("docs");
    std::fs::create_dir(&docs).unwrap();
    std::fs::write(docs.join("alpha.txt"), "First paragraph about brakes.\n\nSecond paragraph about signals.").unwrap();
    std::fs::write(docs.join("ignored.md"), "not a text file").unwrap();
    let w = dir.path().join("work");
    let pool = dir.path().join("pool.jsonl");
    let line = r#"{"question":"What do brakes need?","style":"policy_application","source_chunk_ids":["alpha:0"]}"#;
    std::fs::write(&pool, format!("{line}\n")).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_qagen"))
        .arg("--work-dir")
        .arg(&w)
        .arg("--set")
        .arg(format!("io.documents=\"{}\"", docs.display()))
        .arg("--set")
        .arg(format!("io.expert_pool=\"{}\"", pool.display()))
        .arg("ingest")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let chunks = qagen::corpus::load_corpus(&w.join("chunks.jsonl")).unwrap();
    assert!(!chunks.is_empty());
    assert!(chunks.iter().all(|c| c.doc_id == "alpha"));
}
