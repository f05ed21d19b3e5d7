//! Run the coarse-ranking ablation grid on a reduced corpus and print the table.
//!
//!     cargo run --release --example ablation_grid

use salrank::experiment::{ablate, coarse_grid, prepare_synthetic, ForgeSettings};
use salrank::model::ModelConfig;
use salrank::synth::{gen_corpus, SynthConfig};
use salrank::train::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let synth = SynthConfig { n_train: 120, n_test: 40, ..Default::default() };
    let data = prepare_synthetic(&gen_corpus(&synth, 0)?, &ForgeSettings::default())?;
    let model = ModelConfig { d_h: 32, ..ModelConfig::new(data.vocab.len()) };
    let train = TrainConfig { epochs: 20, ..Default::default() };
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let table = ablate(&coarse_grid(), &data, &[0, 1], &train, &model, workers)?;
    print!("{}", table.render());
    Ok(())
}
