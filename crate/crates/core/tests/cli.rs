//! The binary end to end: exit codes, manifests and config precedence.

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use stereoaudit::audit::BiasReport;
use stereoaudit::cli::{manifest_path, RunManifest};
use stereoaudit::inference::ModelFile;
use stereoaudit::promptgen::read_library;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stereoaudit"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let o = run(args);
    assert_eq!(code(&o), 0, "{args:?}\n{}", String::from_utf8_lossy(&o.stderr));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(out: &Path) -> RunManifest {
    serde_json::from_slice(&std::fs::read(manifest_path(out)).unwrap()).unwrap()
}

/// Builds the corpus into `dir` and returns its path.
fn build_corpus(dir: &Path) -> PathBuf {
    let out = dir.join("mgs.jsonl");
    let root = common::root();
    ok(&[
        "corpus",
        "build",
        "--stereoset",
        s(&root.join("data/raw/stereoset_dev.json")),
        "--crowspairs",
        s(&root.join("data/raw/crows_pairs.csv")),
        "--out",
        s(&out),
    ]);
    out
}

fn stub_model(dir: &Path, name: &str, model: ModelFile) -> PathBuf {
    let p = dir.join(name);
    model.save(&p).unwrap();
    p
}

#[test]
fn offline_pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = build_corpus(d);
    let m = manifest(&corpus);
    assert_eq!(m.subcommand, "corpus build");
    assert_eq!(m.inputs.len(), 2);
    assert_eq!(
        m.summary["train"].as_u64().unwrap() + m.summary["test"].as_u64().unwrap(),
        14071
    );

    let random = d.join("random.json");
    ok(&["train", "--algo", "random", "--corpus", s(&corpus), "--out", s(&random)]);
    let eval_out = d.join("random_eval.json");
    let o = ok(&[
        "eval",
        "--model",
        s(&random),
        "--corpus",
        s(&corpus),
        "--out",
        s(&eval_out),
    ]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("macro"));
    let report: Value = serde_json::from_slice(&std::fs::read(&eval_out).unwrap()).unwrap();
    assert!((report["macro_f1"].as_f64().unwrap() - 0.09).abs() <= 0.02);
    assert!(manifest_path(&eval_out).exists());

    let gate = stub_model(d, "gate.json", ModelFile::Stub(common::always_unrelated()));
    let prompts = d.join("prompts.jsonl");
    ok(&[
        "prompts",
        "gen",
        "--corpus",
        s(&corpus),
        "--model",
        s(&gate),
        "--quota",
        "5",
        "--out",
        s(&prompts),
    ]);
    assert_eq!(read_library(&prompts).unwrap().len(), 20);

    let passages = d.join("passages.jsonl");
    ok(&[
        "probe",
        "--mock",
        "--model",
        "mock-llm",
        "--prompts",
        s(&prompts),
        "--out",
        s(&passages),
    ]);
    let pm = manifest(&passages);
    assert_eq!(pm.outputs.len(), 2, "passages and failures both recorded");
    assert_eq!(pm.summary["prompts"], 20);

    let scorer = stub_model(
        d,
        "table.json",
        ModelFile::Stub(common::table_classifier(&common::fixture("mock_sentence_table.json"))),
    );
    let audit_out = d.join("audit.json");
    ok(&[
        "audit",
        "--model",
        s(&scorer),
        "--passages",
        s(&passages),
        "--out",
        s(&audit_out),
    ]);
    let bias: BiasReport = serde_json::from_slice(&std::fs::read(&audit_out).unwrap()).unwrap();
    assert_eq!(bias.model, "mock-llm");
    assert_eq!(bias.counts.gender, 5);
    assert!(bias.average.is_some());

    let table = d.join("table.txt");
    ok(&["report", "--in", s(&audit_out), "--reference", "--out", s(&table)]);
    let text = std::fs::read_to_string(&table).unwrap();
    assert!(text.contains("mock-llm") && text.contains("GPT2"), "{text}");
    assert_eq!(manifest(&table).subcommand, "report");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(
        code(&run(&["train", "--corpus", "x.jsonl", "--out", "y.json"])),
        1,
        "--algo missing"
    );

    let missing = d.join("missing.jsonl");
    let out = d.join("model.json");
    let o = run(&["train", "--algo", "logreg", "--corpus", s(&missing), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists() && !manifest_path(&out).exists());

    let prompts = d.join("prompts.jsonl");
    std::fs::write(
        &prompts,
        r#"{"id":"p1","dimension":"gender","text":"My neighbor is a","word_count":4,"source_record_id":"r1"}"#
            .to_string()
            + "\n",
    )
    .unwrap();
    // Nothing listens on the discard port.
    let o = run(&[
        "probe",
        "--endpoint",
        "http://127.0.0.1:9",
        "--model",
        "m",
        "--prompts",
        s(&prompts),
        "--out",
        s(&d.join("passages.jsonl")),
        "--max-retries",
        "0",
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn flags_override_config_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = build_corpus(d);
    let gate = stub_model(d, "gate.json", ModelFile::Stub(common::always_unrelated()));
    let config = d.join("config.json");
    std::fs::write(&config, r#"{"prompts": {"quota": 4, "min_words": 6}}"#).unwrap();

    let from_config = d.join("a.jsonl");
    let args = [
        "prompts",
        "gen",
        "--config",
        s(&config),
        "--corpus",
        s(&corpus),
        "--model",
        s(&gate),
    ];
    ok(&[&args[..], &["--out", s(&from_config)]].concat());
    let lib = read_library(&from_config).unwrap();
    assert_eq!(lib.len(), 16);
    assert!(lib.iter().all(|p| p.word_count >= 6));
    assert_eq!(manifest(&from_config).config["quota"], 4);

    let from_flag = d.join("b.jsonl");
    ok(&[&args[..], &["--quota", "2", "--out", s(&from_flag)]].concat());
    assert_eq!(read_library(&from_flag).unwrap().len(), 8);

    std::fs::write(&config, r#"{"prompts": {"quotas": 4}}"#).unwrap();
    assert_eq!(
        code(&run(&[&args[..], &["--out", s(&d.join("c.jsonl"))]].concat())),
        1,
        "unknown key"
    );
}
