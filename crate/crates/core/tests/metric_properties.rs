//! Fixtures and invariants of the robustness/uniqueness curves, ARUC and AUC.

use proptest::prelude::*;

use cited_core::nn::Provenance;
use cited_core::verify::{aruc, auc, normalize_scores, ru_curves, summarize, MatchScore, RUCurve};
use cited_core::Level;

#[test]
fn hand_computed_fixtures() {
    let c = ru_curves(&[0.0, 0.0], &[1.0, 1.0], Level::Emb, 4);
    assert_eq!(c.thresholds, vec![0.25, 0.5, 0.75, 1.0]);
    assert_eq!(c.robustness, vec![1.0; 4]);
    assert_eq!(c.uniqueness, vec![1.0; 4]);
    assert_eq!(aruc(&c), 1.0);

    let r_only = RUCurve {
        thresholds: vec![0.5, 1.0],
        robustness: vec![1.0, 1.0],
        uniqueness: vec![0.0, 0.0],
    };
    assert_eq!(aruc(&r_only), 0.0);
    let mixed = RUCurve {
        thresholds: vec![0.5, 1.0],
        robustness: vec![1.0, 1.0],
        uniqueness: vec![0.5, 1.0],
    };
    assert_eq!(aruc(&mixed), 0.75);

    assert_eq!(auc(&[0.9, 0.8], &[0.1, 0.2], Level::Label), 1.0);
    assert_eq!(auc(&[0.5], &[0.5], Level::Label), 0.5);
    assert_eq!(auc(&[0.5], &[0.5], Level::Emb), 0.5);
    assert_eq!(auc(&[0.3], &[0.7], Level::Label), 0.0);
    // lower distance is the stronger match at embedding level
    assert_eq!(auc(&[0.3], &[0.7], Level::Emb), 1.0);
}

#[test]
fn normalization_fixtures() {
    let mk = |v: &[f64]| -> Vec<MatchScore> {
        v.iter().map(|&x| MatchScore::new("m", Provenance::Surrogate, Level::Emb, x)).collect()
    };
    let mut s = mk(&[0.0, 10.0]);
    normalize_scores(&mut s);
    assert_eq!((s[0].normalized, s[1].normalized), (0.0, 1.0));
    let mut s = mk(&[3.0, 3.0, 3.0]);
    normalize_scores(&mut s);
    assert!(s.iter().all(|m| m.normalized == 0.5));
}

#[test]
fn identical_pools_do_not_separate() {
    let pos: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
    for level in [Level::Emb, Level::Label] {
        let c = ru_curves(&pos, &pos, level, 100);
        assert!(c.minima().all(|m| m <= 0.5 + 1.0 / 20.0));
        assert_eq!(auc(&pos, &pos, level), 0.5);
    }
}

fn strictly_increasing(x: f64) -> f64 {
    x.powi(3) + 2.0 * x + 1.0
}

fn pool(pos: &[f64], neg: &[f64]) -> Vec<MatchScore> {
    pos.iter()
        .map(|&v| MatchScore::new("s", Provenance::Surrogate, Level::Label, v))
        .chain(neg.iter().map(|&v| MatchScore::new("i", Provenance::Independent, Level::Label, v)))
        .collect()
}

proptest! {
    #[test]
    fn auc_is_antisymmetric_without_ties(pos in prop::collection::hash_set(0u32..1000, 1..10), neg in prop::collection::hash_set(1000u32..2000, 1..10)) {
        let p: Vec<f64> = pos.iter().map(|&v| v as f64 / 7.0).collect();
        let n: Vec<f64> = neg.iter().map(|&v| v as f64 / 7.0 - 100.0).collect();
        for level in [Level::Emb, Level::Label] {
            prop_assert!((auc(&p, &n, level) + auc(&n, &p, level) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn label_metrics_ignore_monotone_transforms(pos in prop::collection::vec(0.0f64..1.0, 1..8), neg in prop::collection::vec(0.0f64..1.0, 1..8)) {
        let a = summarize(pool(&pos, &neg), Level::Label, 100);
        let tp: Vec<f64> = pos.iter().copied().map(strictly_increasing).collect();
        let tn: Vec<f64> = neg.iter().copied().map(strictly_increasing).collect();
        let b = summarize(pool(&tp, &tn), Level::Label, 100);
        prop_assert_eq!(a.auc, b.auc);
        // ARUC goes through min-max normalization, which is affine-invariant
        let affine = |v: &[f64]| v.iter().map(|x| 4.0 * x + 0.5).collect::<Vec<f64>>();
        let c = summarize(pool(&affine(&pos), &affine(&neg)), Level::Label, 100);
        prop_assert!((a.aruc - c.aruc).abs() < 1e-12);
    }

    #[test]
    fn curves_are_bounded_and_monotone(pos in prop::collection::vec(0.0f64..1.0, 0..10), neg in prop::collection::vec(0.0f64..1.0, 0..10), r in 1usize..50) {
        let c = ru_curves(&pos, &neg, Level::Emb, r);
        prop_assert_eq!(c.robustness.len(), r);
        prop_assert_eq!(c.uniqueness.len(), r);
        prop_assert!(c.robustness.iter().chain(&c.uniqueness).all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(c.robustness.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(c.uniqueness.windows(2).all(|w| w[0] >= w[1]));
        let a = aruc(&c);
        prop_assert!((0.0..=1.0).contains(&a));
    }
}
