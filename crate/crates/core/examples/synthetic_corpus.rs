//! Generate the compositional synthetic corpus and write its annotations.
//!
//!     cargo run --example synthetic_corpus -- [out_dir]

use std::collections::BTreeMap;

use salrank::corpus::Split;
use salrank::synth::{gen_corpus, semantic_overlap, SynthConfig, EQUAL_WEIGHTS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = SynthConfig::default();
    let corpus = gen_corpus(&cfg, 0)?;
    let out = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("salrank-synth").display().to_string());
    corpus.write(out.as_ref())?;
    println!("wrote {} samples to {out}", corpus.samples.len());

    for split in Split::ALL {
        let n = corpus.split(split).count();
        let mean_len = corpus.split(split).map(|s| s.span.len()).sum::<usize>() as f64 / n as f64;
        println!("{:<18} {n:>4} samples, mean span {mean_len:.1} clips", split.as_str());
    }
    println!("held-out (verb, object) pairs: {}", corpus.heldout_pairs.len());

    let s = &corpus.samples[0];
    println!("\n{}: {:?} in clips {}..{}", s.id, s.query.text(), s.span.start, s.span.end);
    let mut hist: BTreeMap<String, usize> = BTreeMap::new();
    for other in corpus.split(Split::Train) {
        let o = semantic_overlap(&s.event, &other.event, &EQUAL_WEIGHTS)?;
        *hist.entry(format!("{o:.1}")).or_default() += 1;
    }
    println!("overlap of its event with every train event: {hist:?}");
    Ok(())
}
