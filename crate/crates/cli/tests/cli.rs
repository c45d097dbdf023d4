use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn core_fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

fn seckb(kb: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seckb"))
        .arg("--kb")
        .arg(kb)
        .args(args)
        .env_remove("SECKB_API_KEY")
        .env_remove("SECKB_API_BASE")
        .output()
        .expect("binary runs")
}

fn ok(kb: &Path, args: &[&str]) -> String {
    let out = seckb(kb, args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn puppet_corpus(dir: &Path) -> PathBuf {
    let text = fs::read_to_string(core_fixture("corpus.jsonl")).unwrap();
    let line = text
        .lines()
        .find(|l| l.contains("\"id\": \"puppet_enc\""))
        .unwrap();
    let path = dir.join("puppet.jsonl");
    fs::write(&path, format!("{line}\n")).unwrap();
    path
}

#[test]
fn slice_keeps_the_patched_call_and_its_input() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("kb");
    let corpus = puppet_corpus(dir.path());
    ok(&kb, &["ingest", "--corpus", corpus.to_str().unwrap()]);
    ok(&kb, &["--hops", "2", "slice"]);
    let pair: Value =
        serde_json::from_str(&fs::read_to_string(kb.join("slices/puppet_enc.json")).unwrap())
            .unwrap();
    let secure = pair["secure_slice"].as_str().unwrap();
    let vulnerable = pair["vulnerable_slice"].as_str().unwrap();
    assert!(secure.contains("data = yaml.safe_load(classes)"));
    assert!(vulnerable.contains("data = yaml.load(classes)"));
    assert!(secure.contains("classes = request.form.get('classes', '')"));
    assert_eq!(pair["hop_limit"], 2);
    let kept = pair["kept_lines_sec"].as_array().unwrap().len();
    assert!(kept < pair["original_lines_sec"].as_u64().unwrap() as usize);
}

#[test]
fn evaluate_matches_hand_computed_values() {
    // a: 3 samples, 2 functional, 2 secure, 1 both.
    // b: 2 samples, both pass both checks.
    // c: 1 sample, too few for k = 2.
    let dir = tempfile::tempdir().unwrap();
    let verdicts = dir.path().join("verdicts.jsonl");
    let rows = [
        ("a", 0, true, true),
        ("a", 1, true, false),
        ("a", 2, false, true),
        ("b", 0, true, true),
        ("b", 1, true, true),
        ("c", 0, true, true),
    ];
    let text: String = rows
        .iter()
        .map(|(t, s, f, p)| format!("{{\"task_id\":\"{t}\",\"sample_id\":{s},\"functional_pass\":{f},\"security_pass\":{p}}}\n"))
        .collect();
    fs::write(&verdicts, text).unwrap();
    let out = ok(
        dir.path(),
        &[
            "evaluate",
            "--verdicts",
            verdicts.to_str().unwrap(),
            "--k",
            "1",
            "--k",
            "2",
            "--json",
        ],
    );
    let report: Value = serde_json::from_str(&out).unwrap();
    let close =
        |v: &Value, want: f64| assert!((v.as_f64().unwrap() - want).abs() < 1e-12, "{v} != {want}");

    assert_eq!(report["excluded"][0]["task_id"], "c");
    close(&report["pass_at_k"]["1"], (2.0 / 3.0 + 1.0) / 2.0);
    close(&report["pass_at_k"]["2"], 1.0);
    close(&report["secure_pass_at_k"]["1"], (1.0 / 3.0 + 1.0) / 2.0);
    close(&report["secure_pass_at_k"]["2"], (2.0 / 3.0 + 1.0) / 2.0);
    close(&report["secure_rate_micro"], 4.0 / 5.0);
    close(&report["secure_rate_macro"], (2.0 / 3.0 + 1.0) / 2.0);
}

#[test]
fn empty_knowledge_base_reports_no_candidates() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("kb");
    let corpus = dir.path().join("empty.jsonl");
    fs::write(&corpus, "").unwrap();
    ok(&kb, &["ingest", "--corpus", corpus.to_str().unwrap()]);
    for stage in ["slice", "distill", "index"] {
        ok(&kb, &[stage]);
    }
    let out = seckb(&kb, &["query", "--code", "x = 1", "--json"]);
    assert_eq!(out.status.code(), Some(2));
    let shown: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(shown["cwe_candidates"], Value::Array(vec![]));
}

#[test]
fn stages_are_idempotent_and_index_goes_stale() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("kb");
    let corpus = core_fixture("corpus.jsonl");
    ok(&kb, &["ingest", "--corpus", corpus.to_str().unwrap()]);
    ok(&kb, &["slice"]);
    ok(&kb, &["distill"]);
    ok(&kb, &["index"]);
    let manifest = fs::read(kb.join("manifest.json")).unwrap();

    ok(&kb, &["ingest", "--corpus", corpus.to_str().unwrap()]);
    assert_eq!(fs::read(kb.join("manifest.json")).unwrap(), manifest);
    assert!(ok(&kb, &["distill"]).contains("distilled 0 CWE clusters"));
    ok(&kb, &["query", "--code", "data = yaml.load(text)"]);

    ok(&kb, &["slice"]);
    let out = seckb(&kb, &["query", "--code", "data = yaml.load(text)"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run `index` first"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(seckb(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(seckb(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        seckb(dir.path(), &["--api-key", "x", "inspect"])
            .status
            .code(),
        Some(1)
    );

    let config = dir.path().join("seckb.toml");
    fs::write(&config, "api_key = \"sk-test\"\n").unwrap();
    assert_eq!(
        seckb(
            dir.path(),
            &["--config", config.to_str().unwrap(), "inspect"]
        )
        .status
        .code(),
        Some(1)
    );

    assert_eq!(
        seckb(&dir.path().join("missing"), &["slice"]).status.code(),
        Some(2)
    );

    let tasks = core_fixture("tasks.jsonl");
    let out = seckb(
        dir.path(),
        &[
            "--provider",
            "http",
            "generate",
            "--zero-shot",
            "--tasks",
            tasks.to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(3));
}
