//! Forge three nested levels of hard negatives for a few queries, plus an
//! in-batch easy negative.
//!
//!     cargo run --example forge_negatives

use salrank::forge::{build_hierarchy, forge_lexicon_hierarchy, sample_easy_negative, Weighting};
use salrank::synth::{gen_corpus, SynthConfig};
use salrank::corpus::Split;
use salrank::tagger::build_dictionary;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = gen_corpus(&SynthConfig { n_train: 40, n_test: 2, ..Default::default() }, 0)?;
    let queries: Vec<_> = corpus.split(Split::Train).map(|s| s.query.clone()).collect();
    let dict = build_dictionary(&queries, "train")?;
    let ids: Vec<String> = queries.iter().map(|q| q.query_id.clone()).collect();
    let ratios = [0.25, 0.5, 0.75];

    for (i, q) in queries.iter().take(3).enumerate() {
        let plans = build_hierarchy(q, ratios)?;
        let hn = forge_lexicon_hierarchy(q, ratios, &dict, 7, Weighting::Frequency)?;
        println!("positive  {}", q.text());
        for (plan, rec) in plans.iter().zip(&hn) {
            println!("{:<9} {}   masked {:?} {:?}", format!("{:?}", rec.level), rec.negative_text, plan.sorted_positions(), plan.masked_classes);
        }
        let easy = sample_easy_negative(&ids, i, 7)?;
        println!("easy      {easy}\n");
    }
    Ok(())
}
