//! Coarse and fine ranking losses on hand-made saliency tracks, and how they
//! combine with base terms.
//!
//!     cargo run --example ranking_losses

use salrank::ranking::{
    coarse_loss, combine, fine_loss, neg_pair_loss, CoarseConfig, FineConfig, FineMode, SaliencyTrack, WeightedTerm,
};
use salrank::span::ClipSpan;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let span = ClipSpan::new(2, 6, 10)?;
    // positive peaks inside the span; negatives flatten out level by level
    let pos = SaliencyTrack::new(vec![-1.0, -0.5, 2.0, 2.4, 2.2, 1.8, -0.2, -1.0, -1.2, -0.8]);
    let hn: Vec<SaliencyTrack> = [0.6, 0.3, 0.1]
        .iter()
        .map(|s| SaliencyTrack::new(pos.raw().iter().map(|x| x * s).collect()))
        .collect();
    let easy = SaliencyTrack::new(vec![-1.5; 10]);

    let cr = coarse_loss(&pos, &easy, span, &CoarseConfig::default())?;
    println!("coarse  total {:.4}  terms {:?}", cr.total, cr.terms);

    for mode in [FineMode::Relative, FineMode::Absolute] {
        let fr = fine_loss([&pos, &hn[0], &hn[1], &hn[2], &easy], span, &FineConfig { mode, ..Default::default() })?;
        println!("fine {mode:?}  total {:.4}  terms {:?}", fr.total, fr.terms);
    }

    // swapping two levels violates the hierarchy
    let fr = fine_loss([&pos, &hn[1], &hn[0], &hn[2], &easy], span, &FineConfig::default())?;
    let hinges: Vec<String> = fr.terms.iter().filter(|(k, _)| k.starts_with('l')).map(|(k, v)| format!("{k}={v:.3}")).collect();
    println!("fine swapped  total {:.4}  {}", fr.total, hinges.join(" "));

    let neg = neg_pair_loss(&easy);
    let base = [WeightedTerm { name: "neg", weight: 1.0, report: &neg }];
    let all = combine(&base, Some(&cr), Some(&fr), 1.0, 1.0, true)?;
    println!("combined total {:.4}", all.total);
    for (k, v) in &all.terms {
        println!("  {k:<16} {v:.4} x {}", all.weight(k));
    }
    Ok(())
}
