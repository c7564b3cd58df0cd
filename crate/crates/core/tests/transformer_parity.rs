//! The native ONNX backend against PyTorch and the Hugging Face tokenizer,
//! on tiny randomly initialised DistilBERT exports.

use std::path::PathBuf;

use serde::Deserialize;
use stereoaudit::inference::{load_transformer, load_transformer_with_layout, Classifier, LogitLayout};
use stereoaudit::labels::Dimension;

#[derive(Deserialize)]
struct Row {
    text: String,
    input_ids: Vec<i64>,
    logits: Vec<f64>,
}

#[derive(Deserialize)]
struct Reference {
    full: Vec<Row>,
    dimension: Vec<Row>,
}

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny_onnx")
}

fn reference() -> Reference {
    serde_json::from_slice(&std::fs::read(dir().join("reference.json")).unwrap()).unwrap()
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

#[test]
fn nine_way_export_matches_torch() {
    let c = load_transformer(&dir().join("tiny9.onnx"), &dir().join("tokenizer_spec.json")).unwrap();
    for row in reference().full {
        let (ids, _) = c.input_ids(&row.text);
        assert_eq!(ids, row.input_ids, "token ids for {:?}", row.text);
        if row.text.is_empty() {
            assert!(
                c.classify(&row.text).is_err(),
                "empty input is rejected before the model"
            );
            continue;
        }
        let p = c.classify(&row.text).unwrap();
        for (code, want) in softmax(&row.logits).into_iter().enumerate() {
            assert!(
                (p.get(code) - want).abs() < 1e-5,
                "{:?} label {code}: {} vs {want}",
                row.text,
                p.get(code)
            );
        }
    }
    assert_eq!(c.truncations(), 1, "only the long sentence exceeds the position limit");
}

#[test]
fn three_way_export_maps_onto_one_dimension() {
    let c = load_transformer_with_layout(
        &dir().join("tiny3.onnx"),
        &dir().join("tokenizer_spec.json"),
        LogitLayout::Dimension(Dimension::Race),
    )
    .unwrap();
    for row in reference().dimension.iter().filter(|r| !r.text.is_empty()) {
        let p = c.classify(&row.text).unwrap();
        let want = softmax(&row.logits);
        let got = [
            p.get(0),
            p.get(Dimension::Race.stereotype_code()),
            p.get(Dimension::Race.anti_stereotype_code()),
        ];
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-5, "{:?}: {got:?} vs {want:?}", row.text);
        }
        assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn three_logit_export_is_rejected_as_nine_way() {
    let err = load_transformer(&dir().join("tiny3.onnx"), &dir().join("tokenizer_spec.json")).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("3 logits"), "{msg}");
    assert!(msg.contains("stereotype_religion"), "mapping named: {msg}");
}

#[test]
fn nine_logit_export_is_rejected_as_one_dimension() {
    let err = load_transformer_with_layout(
        &dir().join("tiny9.onnx"),
        &dir().join("tokenizer_spec.json"),
        LogitLayout::Dimension(Dimension::Gender),
    )
    .unwrap_err();
    assert!(err.to_string().contains("anti-stereotype_gender"), "{err}");
}
