//! Render a small synthetic newspaper corpus with ground truth.
//!
//! Usage: cargo run --example synth_corpus [outdir]

use tenderscan::pipeline::{generate_synthetic_corpus, save_corpus, CorpusSpec};

fn main() {
    let outdir = std::env::args().nth(1).unwrap_or_else(|| "target/synth-corpus".into());
    let spec = CorpusSpec::default();
    let corpus = generate_synthetic_corpus(5, &spec, 42).expect("placement is feasible");
    let truth = save_corpus(&corpus, std::path::Path::new(&outdir)).expect("writable outdir");

    for page in &corpus.truth {
        for frame in &page.frames {
            println!(
                "page {} {:?} {}",
                page.page,
                frame.bbox,
                if frame.tender { "tender" } else { "distractor" }
            );
        }
    }
    println!("pages + ground truth written to {outdir} ({})", truth.display());
}
