//! Full nine-way evaluation and the per-dimension three-way view for one
//! classifier, with the per-class breakdown and confusion matrix.
//!
//!     cargo run --release --example evaluate -- [model.json]

mod common;

use stereoaudit::corpus::corpus_digest;
use stereoaudit::evaluation::{eval_dimension, eval_full, render_report, Projection};
use stereoaudit::inference::load_model;
use stereoaudit::labels::Dimension;

fn main() -> stereoaudit::Result<()> {
    let records = common::corpus().records;
    let test = common::test_split(&records);
    let hash = corpus_digest(&records);
    let classifier = match std::env::args().nth(1) {
        Some(path) => load_model(path.as_ref(), None)?.classifier()?,
        None => common::quick_logreg(&records, 4000),
    };

    let full = eval_full(classifier.as_ref(), &test, &hash)?;
    print!("{}", render_report(&full));
    for d in [
        Dimension::Profession,
        Dimension::Gender,
        Dimension::Race,
        Dimension::Religion,
    ] {
        let r = eval_dimension(classifier.as_ref(), &test, d, Projection::StrictOther, &hash)?;
        println!(
            "{d:<11} P {:.3}  R {:.3}  F1 {:.3}  ({} records)",
            r.macro_precision, r.macro_recall, r.macro_f1, r.instances
        );
    }
    Ok(())
}
