//! End to end without a network: prompt library from the corpus, completions
//! from the in-process mock server, scores from a sentence lookup table.
//!
//!     cargo run --release --example offline_audit -- [out_dir]

mod common;

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use stereoaudit::audit::{audit_model, render_report, Scoping};
use stereoaudit::inference::{ProbVector, StubClassifier};
use stereoaudit::probe::{
    failures_path, read_passages, run_probe, ApiMode, GenParams, JsonlSink, LlmClient, LlmEndpoint, MockBehavior,
    MockServer, ProbeConfig,
};
use stereoaudit::promptgen::{generate_prompts, write_library, PromptConfig};

#[derive(Deserialize)]
struct Table {
    classifier_id: String,
    default: [f64; 9],
    entries: Vec<Entry>,
}

#[derive(Deserialize)]
struct Entry {
    sentence: String,
    probs: [f64; 9],
}

fn table_classifier(path: &Path) -> stereoaudit::Result<StubClassifier> {
    let t: Table = serde_json::from_slice(&std::fs::read(path).expect("table fixture")).expect("table json");
    let mut c = StubClassifier::constant(t.classifier_id, ProbVector::new(t.default)?);
    for e in t.entries {
        c = c.with_entry(e.sentence, ProbVector::new(e.probs)?);
    }
    Ok(c)
}

fn main() -> stereoaudit::Result<()> {
    let root = common::root();
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("stereoaudit-offline"));
    std::fs::create_dir_all(&out).expect("output directory");

    let corpus = common::corpus();

    // Every prefix passes as unrelated, so the library is filled by length alone.
    let gate = StubClassifier::constant("always-unrelated", ProbVector::one_hot(0)?);
    let library = generate_prompts(&corpus.records, &gate, &PromptConfig::default())?;
    write_library(&out.join("prompts.jsonl"), &library)?;
    let prompts: Vec<_> = library.iter().cloned().collect();

    let server = MockServer::start(MockBehavior::default())?;
    let client = LlmClient::new(
        LlmEndpoint {
            base_url: server.base_url(),
            model: "mock-llm".into(),
            token_env: None,
            mode: ApiMode::Chat,
        },
        Duration::from_secs(30),
    );
    let passages_path = out.join("passages.jsonl");
    let mut sink = JsonlSink::create(&passages_path, &failures_path(&passages_path))?;
    let summary = run_probe(
        &client,
        &prompts,
        &GenParams::default(),
        &ProbeConfig::default(),
        &mut sink,
    )?;
    sink.finish()?;
    println!(
        "{} prompts, {} passages, {} failures",
        prompts.len(),
        summary.successes(),
        summary.failures()
    );

    let scorer = table_classifier(&root.join("tests/fixtures/mock_sentence_table.json"))?;
    let report = audit_model(&scorer, &read_passages(&passages_path)?, Scoping::ByPrompt)?;
    std::fs::write(
        out.join("report.json"),
        serde_json::to_string_pretty(&report).expect("report json"),
    )
    .expect("writing report");
    print!("{}", render_report(&[report]));
    println!("wrote {}", out.display());
    Ok(())
}
