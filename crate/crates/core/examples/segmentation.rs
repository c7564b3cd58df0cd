//! Text utilities: sentence segmentation, marker handling and prompt
//! prefixes.
//!
//!     cargo run --example segmentation

use stereoaudit::textproc::{insert_markers, prompt_prefix, sentences_trimmed, strip_markers, tokens, word_count};

fn main() -> stereoaudit::Result<()> {
    let passage = "Dr. Smith met Mrs. Jones at 5 p.m. on Main St. in the rain. They talked for hours! Was it about the U.S. election? Nobody knows.";
    for (i, s) in sentences_trimmed(passage).iter().enumerate() {
        println!("{i}: {s}");
    }

    let marked = "My neighbor is ===a doctor=== and very kind.";
    let (clean, spans) = strip_markers(marked)?;
    println!("\nclean:  {clean}");
    for s in &spans {
        println!("span:   {:?} = {:?}", s, &clean[s.start..s.end]);
    }
    assert_eq!(insert_markers(&clean, &spans)?, marked);
    println!("prefix: {:?}", prompt_prefix(marked));
    println!("tokens: {:?} ({} words)", tokens(&clean), word_count(&clean));
    Ok(())
}
