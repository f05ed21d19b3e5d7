//! Bipartite matching between predicted moments and ground-truth spans.
//!
//!     cargo run --example moment_matching

use salrank::matcher::{match_cost, solve, MomentPrediction};
use salrank::ranking::BaseLossConfig;
use salrank::span::NormSpan;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let preds = [
        MomentPrediction { span: NormSpan::new(0.20, 0.10), class_probs: [0.70, 0.30] },
        MomentPrediction { span: NormSpan::new(0.55, 0.25), class_probs: [0.40, 0.60] },
        MomentPrediction { span: NormSpan::new(0.80, 0.20), class_probs: [0.90, 0.10] },
        MomentPrediction { span: NormSpan::new(0.50, 0.50), class_probs: [0.20, 0.80] },
    ];
    let gts = [NormSpan::new(0.55, 0.20), NormSpan::new(0.85, 0.15)];
    let cost = match_cost(&preds, &gts, &BaseLossConfig::default())?;
    for (i, row) in cost.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:8.3}")).collect();
        println!("pred {i}: {}", cells.join(" "));
    }
    let a = solve(&cost)?;
    println!("assignment {:?}  total cost {:.4}", a.pairs, a.total_cost);
    Ok(())
}
