//! Train the toy scorer with the full objective and with the base loss only,
//! then compare test metrics.
//!
//!     cargo run --release --example train_scorer -- [epochs]

use salrank::experiment::{prepare_synthetic, run_experiment, ForgeSettings, RunSpec};
use salrank::model::ModelConfig;
use salrank::objective::ObjectiveConfig;
use salrank::synth::{gen_corpus, SynthConfig};
use salrank::train::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(30);
    let corpus = gen_corpus(&SynthConfig::default(), 0)?;
    let data = prepare_synthetic(&corpus, &ForgeSettings::default())?;
    let model = ModelConfig::new(data.vocab.len());
    let train = TrainConfig { epochs, seed: 1, ..Default::default() };

    for (name, objective) in [("full", ObjectiveConfig::default()), ("base", ObjectiveConfig::base_only())] {
        let res = run_experiment(&data, &RunSpec { objective, train, model }, false, None)?;
        let first = res.outcome.trace.first().map_or(f64::NAN, |r| r.total);
        let last = res.outcome.trace.last().map_or(f64::NAN, |r| r.total);
        println!("{name}: train loss {first:.3} -> {last:.3} over {epochs} epochs");
        for (split, m) in &res.report.splits {
            println!(
                "  {split:<18} R1@0.5 {:.3}  R1@0.7 {:.3}  mIoU {:.3}  ordering {:.3}  violations {:.3}",
                m.r1_05, m.r1_07, m.miou, m.ordering_accuracy, m.hierarchy_violation_rate
            );
        }
    }
    Ok(())
}
