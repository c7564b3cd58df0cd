//! Classifies sentences with an exported transformer through the native
//! ONNX interpreter. Defaults to the tiny randomly initialised fixture, so
//! the probabilities are meaningless but the plumbing is real.
//!
//!     cargo run --release --example transformer_classify -- [model.onnx tokenizer_spec.json]

use std::path::PathBuf;

use stereoaudit::inference::{load_transformer, Classifier};
use stereoaudit::labels::Label;

fn main() -> stereoaudit::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let fixture = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny_onnx");
    let (model, spec) = match args.as_slice() {
        [m, s] => (PathBuf::from(m), PathBuf::from(s)),
        _ => (fixture.join("tiny9.onnx"), fixture.join("tokenizer_spec.json")),
    };
    let c = load_transformer(&model, &spec)?;
    for s in [
        "The nurse was very caring.",
        "He is good at math!",
        "My neighbor from the country always works.",
    ] {
        let (ids, truncated) = c.input_ids(s);
        let p = c.classify(s)?;
        let (code, _) = p.argmax();
        println!(
            "{s}\n  ids {ids:?}{}\n  {} ({:.3})",
            if truncated { " (truncated)" } else { "" },
            Label::from_code(code)?.name(),
            p.get(code)
        );
    }
    println!("truncated inputs: {}", c.truncations());
    Ok(())
}
