//! LIME-style and Shapley attributions for one sentence, and how far the
//! two agree.
//!
//!     cargo run --release --example explain_sentence -- ["sentence"] [label]

mod common;

use stereoaudit::explain::{agreement, lime_explain, render_attribution, shapley_explain, LimeConfig, ShapleyConfig};
use stereoaudit::labels::Label;

fn main() -> stereoaudit::Result<()> {
    let mut args = std::env::args().skip(1);
    let sentence = args
        .next()
        .unwrap_or_else(|| "The nurse said she was too emotional to lead the team.".into());
    let records = common::corpus().records;
    let classifier = common::quick_logreg(&records, 4000);

    let probs = classifier.classify(&sentence)?;
    let target = match args.next() {
        Some(name) => name.parse::<Label>()?.code(),
        None => probs.argmax().0,
    };
    println!("{sentence}");
    println!(
        "target {} (p = {:.4})\n",
        Label::from_code(target)?.name(),
        probs.get(target)
    );

    let lime = lime_explain(classifier.as_ref(), &sentence, target, &LimeConfig::default())?;
    let shap = shapley_explain(classifier.as_ref(), &sentence, target, &ShapleyConfig::default())?;
    print!(
        "{}\n{}",
        render_attribution(&sentence, &lime),
        render_attribution(&sentence, &shap)
    );
    let a = agreement(&lime, &shap, 3)?;
    println!(
        "\nspearman {:.3}, top-{} overlap {:.2}, sign agreement {:.2}",
        a.spearman_abs, a.k, a.top_k_overlap, a.sign_agreement
    );
    Ok(())
}
