//! Trains the random, logistic-regression and sigmoid-SVM baselines on the
//! training split, prints the method table, then compares the multi-class
//! model with single-dimension models per dimension.
//!
//!     cargo run --release --example train_baselines -- [svm_subsample]

mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use stereoaudit::baselines::{train_baseline, Algo, RandomModel, TrainConfig};
use stereoaudit::corpus::corpus_digest;
use stereoaudit::evaluation::{
    compare_multi_vs_single, eval_dimension, eval_full, eval_random, render_comparison, render_method_table, Projection,
};
use stereoaudit::labels::{Dimension, NUM_LABELS};

fn main() -> stereoaudit::Result<()> {
    let svm_subsample = std::env::args()
        .nth(1)
        .map(|s| s.parse::<usize>().expect("subsample size"));
    let records = common::corpus().records;
    let test = common::test_split(&records);
    let hash = corpus_digest(&records);

    let mut rows = Vec::new();
    let random = eval_random(
        &RandomModel {
            seed: 42,
            num_classes: NUM_LABELS,
        },
        &test,
        &hash,
    )?;
    rows.push(("Random Assigned Label".to_string(), random.macro_metrics()));

    let mut multi_logreg = None;
    for (name, algo, subsample) in [
        ("Logistic Regression (TF-IDF)", Algo::Logreg, None),
        ("SVM (TF-IDF, sigmoid)", Algo::Svm, svm_subsample),
    ] {
        let t = Instant::now();
        let cfg = TrainConfig {
            algo,
            subsample,
            ..TrainConfig::default()
        };
        let (file, report) = train_baseline(&records, &cfg)?;
        let c = file.into_loaded().classifier()?;
        let r = eval_full(c.as_ref(), &test, &hash)?;
        eprintln!(
            "{name}: {} records, vocabulary {}, converged {}, {:.1?}",
            report.used_records,
            report.vocabulary,
            report.converged,
            t.elapsed()
        );
        rows.push((name.to_string(), r.macro_metrics()));
        if algo == Algo::Logreg {
            multi_logreg = Some(c);
        }
    }
    print!("{}", render_method_table(&rows));

    // Same learner, trained on everything versus on one dimension at a time.
    let multi_c = multi_logreg.expect("trained above");
    let (mut multi, mut single) = (BTreeMap::new(), BTreeMap::new());
    for d in [
        Dimension::Race,
        Dimension::Profession,
        Dimension::Gender,
        Dimension::Religion,
    ] {
        multi.insert(
            d,
            eval_dimension(multi_c.as_ref(), &test, d, Projection::StrictOther, &hash)?.macro_metrics(),
        );
        let cfg = TrainConfig {
            dimension: Some(d),
            ..TrainConfig::default()
        };
        let c = train_baseline(&records, &cfg)?.0.into_loaded().classifier()?;
        single.insert(
            d,
            eval_dimension(c.as_ref(), &test, d, Projection::StrictOther, &hash)?.macro_metrics(),
        );
    }
    let cmp = compare_multi_vs_single(&multi, &single)?;
    println!();
    print!("{}", render_comparison(&cmp));
    Ok(())
}
