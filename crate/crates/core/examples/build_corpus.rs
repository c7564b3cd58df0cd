//! Builds the nine-label corpus from the bundled StereoSet and CrowS-Pairs
//! files and writes it as JSONL.
//!
//!     cargo run --example build_corpus -- [out.jsonl]

mod common;

use std::collections::BTreeMap;

use stereoaudit::corpus::{corpus_digest, write_mgs, Split};

fn main() -> stereoaudit::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "mgs.jsonl".into());
    let built = common::corpus();
    write_mgs(out.as_ref(), &built.records)?;

    println!(
        "stereoset: {} units, {} skipped rows",
        built.stereoset.units,
        built.stereoset.skipped_rows.len()
    );
    println!(
        "crowspairs: {} units, {} rows outside the four dimensions",
        built.crowspairs.units, built.crowspairs.dropped_unmapped_category
    );
    println!(
        "{} records, {} units dropped, {} marker fallbacks",
        built.records.len(),
        built.report.dropped_total(),
        built.report.marker_fallbacks
    );
    let mut per_label: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in &built.records {
        let e = per_label.entry(r.label.name()).or_default();
        match r.split {
            Some(Split::Train) => e.0 += 1,
            _ => e.1 += 1,
        }
    }
    println!("{:<26} {:>6} {:>6}", "label", "train", "test");
    for (label, (train, test)) in per_label {
        println!("{label:<26} {train:>6} {test:>6}");
    }
    println!("sha256 {}", corpus_digest(&built.records));
    println!("wrote {out}");
    Ok(())
}
