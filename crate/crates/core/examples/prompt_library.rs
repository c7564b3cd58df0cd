//! Builds a prompt library: the text before each record's marked span,
//! longest first, kept when a trained classifier calls it unrelated.
//!
//!     cargo run --release --example prompt_library -- [quota] [out.jsonl]

mod common;

use stereoaudit::promptgen::{generate_prompts, write_library, PromptConfig};

fn main() -> stereoaudit::Result<()> {
    let mut args = std::env::args().skip(1);
    let quota = args.next().map_or(20, |q| q.parse().expect("quota"));
    let out = args.next().unwrap_or_else(|| "prompts.jsonl".into());
    let records = common::corpus().records;
    let gate = common::quick_logreg(&records, 4000);

    let library = generate_prompts(
        &records,
        gate.as_ref(),
        &PromptConfig {
            quota,
            ..PromptConfig::default()
        },
    )?;
    for (d, stats) in &library.stats {
        println!(
            "{d:<11} admitted {:>4}  tested {:>4}  not unrelated {:>4}  too short {:>4}  duplicates {:>4}",
            stats.admitted, stats.tested, stats.rejected_not_unrelated, stats.too_short, stats.duplicates
        );
    }
    for (d, entries) in &library.entries {
        if let Some(p) = entries.first() {
            println!("{d}: {:?} ({} words)", p.text, p.word_count);
        }
    }
    write_library(out.as_ref(), &library)?;
    println!("wrote {} prompts to {out}", library.len());
    Ok(())
}
