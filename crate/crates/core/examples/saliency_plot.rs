//! Train briefly, score one test sample and write its five saliency tracks as SVG.
//!
//!     cargo run --release --example saliency_plot -- [out.svg]

use salrank::corpus::Split;
use salrank::experiment::{prepare_synthetic, run_experiment, score_split, ForgeSettings, RunSpec};
use salrank::model::ModelConfig;
use salrank::objective::ObjectiveConfig;
use salrank::plot::PlotData;
use salrank::synth::{gen_corpus, SynthConfig};
use salrank::train::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "saliency.svg".into());
    let synth = SynthConfig { n_train: 200, n_test: 20, ..Default::default() };
    let data = prepare_synthetic(&gen_corpus(&synth, 0)?, &ForgeSettings::default())?;
    let spec = RunSpec {
        objective: ObjectiveConfig::default(),
        train: TrainConfig { epochs: 20, ..Default::default() },
        model: ModelConfig::new(data.vocab.len()),
    };
    let res = run_experiment(&data, &spec, false, None)?;
    let samples = data.split(Split::TestTrivial);
    let scores = score_split(&res.outcome.params, samples, spec.objective.coarse.q, 0)?;

    let s = &scores[0];
    let words = data.vocab.words();
    let decode = |ids: &[usize]| ids.iter().map(|&i| words[i].as_str()).collect::<Vec<_>>().join(" ");
    let easy = samples.iter().find(|x| x.id == s.easy_id).map(|x| decode(&x.queries[0])).unwrap_or_default();
    let q = &samples[0].queries;
    let plot = PlotData::from_scores(s, [decode(&q[0]), decode(&q[1]), decode(&q[2]), decode(&q[3]), easy]);
    for t in &plot.tracks {
        println!("{:<8} pooled {:+.3}  {}", t.role, t.pooled, t.query);
    }
    std::fs::write(&out, plot.to_svg())?;
    println!("wrote {out}");
    Ok(())
}
