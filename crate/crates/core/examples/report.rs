//! Renders bias reports side by side with the published GPT-2 row. Reads
//! report JSON files when given, else shows two made-up models.
//!
//!     cargo run --example report -- [report.json ...]

use stereoaudit::audit::{reference_gpt2, render_report, report_table, BiasReport, PerDimension};

fn made_up(model: &str, s: [f64; 4]) -> BiasReport {
    let mut r = reference_gpt2();
    r.model = model.into();
    r.scores = PerDimension {
        profession: Some(s[0]),
        gender: Some(s[1]),
        race: Some(s[2]),
        religion: Some(s[3]),
    };
    r.average = Some(s.iter().sum::<f64>() / 4.0);
    r
}

fn main() {
    let paths: Vec<String> = std::env::args().skip(1).collect();
    let mut reports: Vec<BiasReport> = if paths.is_empty() {
        vec![
            made_up("model-a", [0.62, 0.70, 0.58, 0.66]),
            made_up("model-b", [0.55, 0.74, 0.61, 0.49]),
        ]
    } else {
        paths
            .iter()
            .map(|p| serde_json::from_slice(&std::fs::read(p).expect("report file")).expect("BiasReport JSON"))
            .collect()
    };
    reports.push(reference_gpt2());
    print!("{}", render_report(&reports));
    println!(
        "\n{}",
        serde_json::to_string_pretty(&report_table(&reports)).expect("table json")
    );
}
