mod common;

use common::*;
use proptest::prelude::*;
use salrank::ranking::{
    coarse_loss, fine_loss, giou_1d, nll_distance, pooled_pos, CoarseConfig, FineConfig, FineMode,
    SaliencyTrack,
};
use salrank::span::ClipSpan;

#[test]
fn pooled_matches_brute_force_over_grid() {
    let (cases, bad) = pooled_grid_mismatches();
    assert!(cases > 1000);
    assert_eq!(bad, 0, "{bad} of {cases} pooled cases disagree with the oracle");
}

#[test]
fn hand_computed_fixtures_hold_exactly() {
    for f in formula_fixtures() {
        assert!(f.ok(1e-12), "{}: got {} want {}", f.name, f.got, f.want);
    }
}

fn track_and_span() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, ClipSpan)> {
    (2usize..24).prop_flat_map(|t| {
        (
            prop::collection::vec(-4.0f64..4.0, t),
            prop::collection::vec(-4.0f64..4.0, t),
            (0..t).prop_flat_map(move |s| (Just(s), s + 1..=t)),
        )
            .prop_map(|(a, b, (s, e))| (a, b, ClipSpan { start: s, end: e }))
    })
}

proptest! {
    #[test]
    fn coarse_zero_set_has_zero_gradient((a, b, span) in track_and_span(), lift in 0.0f64..5.0) {
        // lift the in-span positive scores well above everything else
        let mut sp = a.clone();
        for i in span.start..span.end {
            sp[i] = 20.0 + lift + a[i];
        }
        let rep = coarse_loss(&SaliencyTrack::new(sp), &SaliencyTrack::new(b), span, &CoarseConfig::default()).unwrap();
        prop_assert_eq!(rep.total, 0.0);
        prop_assert!(rep.grad("s_p").unwrap().iter().all(|g| *g == 0.0));
        prop_assert!(rep.grad("s_n").unwrap().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn coarse_is_shift_invariant((a, b, span) in track_and_span(), c in -3.0f64..3.0) {
        let cfg = CoarseConfig::default();
        let base = coarse_loss(&SaliencyTrack::new(a.clone()), &SaliencyTrack::new(b.clone()), span, &cfg).unwrap();
        let shift = |v: &[f64]| v.iter().map(|x| x + c).collect::<Vec<_>>();
        let moved = coarse_loss(&SaliencyTrack::new(shift(&a)), &SaliencyTrack::new(shift(&b)), span, &cfg).unwrap();
        prop_assert!((base.term("intra") - moved.term("intra")).abs() < 1e-9);
        prop_assert!((base.term("inter") - moved.term("inter")).abs() < 1e-9);
    }

    #[test]
    fn pooled_k_follows_floor_rule(t_plus in 1usize..=64, q in prop::sample::select(vec![1usize, 4, 8, 16])) {
        let s: Vec<f64> = (0..t_plus).map(|i| (i * 37 % 11) as f64).collect();
        let p = pooled_pos(&s, ClipSpan { start: 0, end: t_plus }, q).unwrap();
        prop_assert_eq!(p.k, (t_plus / q).max(1));
    }

    #[test]
    fn nll_ignores_unlabeled_positions(
        (y, yhat, noise) in (2usize..20).prop_flat_map(|t| (
            prop::collection::vec(prop::bool::ANY, t),
            prop::collection::vec(1e-3f64..0.999, t),
            prop::collection::vec(1e-3f64..0.999, t),
        ))
    ) {
        let y: Vec<f64> = y.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let perturbed: Vec<f64> = (0..y.len()).map(|i| if y[i] == 0.0 { noise[i] } else { yhat[i] }).collect();
        prop_assert_eq!(nll_distance(&y, &yhat).unwrap(), nll_distance(&y, &perturbed).unwrap());
    }

    #[test]
    fn fine_is_nonnegative_and_zero_when_separated(
        (a, _, span) in track_and_span(),
        absolute in prop::bool::ANY,
    ) {
        let mode = if absolute { FineMode::Absolute } else { FineMode::Relative };
        let cfg = FineConfig { mode, ..Default::default() };
        let t = a.len();
        let tr: Vec<SaliencyTrack> = (0..5).map(|k| SaliencyTrack::new(a.iter().map(|x| x - k as f64).collect())).collect();
        let rep = fine_loss([&tr[0], &tr[1], &tr[2], &tr[3], &tr[4]], span, &cfg).unwrap();
        prop_assert!(rep.total >= 0.0);
        // positive saturated inside the span, negatives pushed ever lower
        let sat: Vec<f64> = (0..t).map(|i| if span.contains(i) { 30.0 } else { -30.0 }).collect();
        let neg = |k: usize| SaliencyTrack::new(vec![-1.0 - 3.0 * k as f64; t]);
        let p = SaliencyTrack::new(sat);
        let (n1, n2, n3, n4) = (neg(1), neg(2), neg(3), neg(4));
        let rep = fine_loss([&p, &n1, &n2, &n3, &n4], span, &FineConfig { margins: [0.0; 4], ..cfg }).unwrap();
        if mode == FineMode::Relative {
            prop_assert_eq!(rep.total, 0.0);
            prop_assert!(rep.grad("s_hn2").unwrap().iter().all(|g| *g == 0.0));
        }
    }

    #[test]
    fn giou_is_bounded_and_symmetric(a0 in 0.0f64..10.0, la in 0.01f64..5.0, b0 in 0.0f64..10.0, lb in 0.01f64..5.0) {
        let g = giou_1d((a0, a0 + la), (b0, b0 + lb));
        prop_assert!((-1.0..=1.0).contains(&g));
        prop_assert!((g - giou_1d((b0, b0 + lb), (a0, a0 + la))).abs() < 1e-12);
    }
}
