use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::Rng;
use tripseg_core::eval::{evaluate, evaluate_subset, EvalConfig, Mode};
use tripseg_core::stats::{
    partition_frames, seeded_rng, wilcoxon_one_sided, wilcoxon_one_sided_with, WilcoxonMethod,
};
use tripseg_core::synth::{noisy_predictions, throughput_ground_truth};
use tripseg_core::{Component, Predictions, TripletSchema};

/// P(W >= w) by listing all 2^n sign patterns of ranks 1..n.
fn enumerate_upper_tail(x: &[f64], y: &[f64]) -> f64 {
    let d: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    let n = d.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].abs().partial_cmp(&d[b].abs()).unwrap());
    // average ranks over ties
    let mut rank = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && d[order[j + 1]].abs() == d[order[i]].abs() {
            j += 1;
        }
        for k in i..=j {
            rank[order[k]] = (i + j + 2) as f64 / 2.0;
        }
        i = j + 1;
    }
    let observed: f64 = (0..n).filter(|&k| d[k] > 0.0).map(|k| rank[k]).sum();
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n)
            .filter(|&k| mask >> k & 1 == 1)
            .map(|k| rank[k])
            .sum();
        if w >= observed - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << n) as f64
}

fn paired(seed: u64, n: usize, coarse: bool) -> (Vec<f64>, Vec<f64>) {
    let mut rng = seeded_rng(seed);
    let q = |v: f64| if coarse { (v * 4.0).round() / 4.0 } else { v };
    let x: Vec<f64> = (0..n).map(|_| q(rng.gen_range(0.0..3.0))).collect();
    let y: Vec<f64> = (0..n).map(|_| q(rng.gen_range(0.0..3.0))).collect();
    (x, y)
}

#[test]
fn all_positive_twelve_is_one_in_4096() {
    let x: Vec<f64> = (1..=12).map(|k| k as f64 + 0.5).collect();
    let y: Vec<f64> = (1..=12).map(|k| k as f64).collect();
    let r = wilcoxon_one_sided(&x, &y).unwrap();
    assert_eq!(r.method, WilcoxonMethod::Exact);
    assert_eq!(r.statistic, 78.0);
    assert!((r.p_value - 1.0 / 4096.0).abs() <= 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn exact_matches_enumeration(seed in any::<u64>(), n in 1usize..=12, coarse in any::<bool>()) {
        let (x, y) = paired(seed, n, coarse);
        prop_assume!(x.iter().zip(&y).any(|(a, b)| a != b));
        let r = wilcoxon_one_sided_with(&x, &y, WilcoxonMethod::Exact).unwrap();
        prop_assert!((r.p_value - enumerate_upper_tail(&x, &y)).abs() <= 1e-12);
    }

    #[test]
    fn branches_agree_for_moderate_n(seed in any::<u64>(), n in 15usize..=20) {
        let (x, y) = paired(seed, n, false);
        let exact = wilcoxon_one_sided_with(&x, &y, WilcoxonMethod::Exact).unwrap();
        let approx = wilcoxon_one_sided_with(&x, &y, WilcoxonMethod::NormalApprox).unwrap();
        prop_assert!((exact.p_value - approx.p_value).abs() <= 0.01, "{} vs {}", exact.p_value, approx.p_value);
    }

    #[test]
    fn rank_sums_are_complementary(seed in any::<u64>(), n in 1usize..=20) {
        let (x, y) = paired(seed, n, false);
        let w = wilcoxon_one_sided(&x, &y).unwrap().statistic;
        let w_neg = wilcoxon_one_sided(&y, &x).unwrap().statistic;
        prop_assert_eq!(w + w_neg, (n * (n + 1) / 2) as f64);
    }

    #[test]
    fn swapping_samples_gives_complementary_tail(seed in any::<u64>(), n in 1usize..=12) {
        let (x, y) = paired(seed, n, false);
        let p_xy = wilcoxon_one_sided(&x, &y).unwrap().p_value;
        let p_yx = wilcoxon_one_sided(&y, &x).unwrap().p_value;
        // P(W = w_obs) = P(W >= w) - P(W >= w + 1)
        let w = wilcoxon_one_sided(&x, &y).unwrap().statistic;
        let mut count = 0u64;
        for mask in 0u64..(1 << n) {
            let s: u64 = (0..n).filter(|&k| mask >> k & 1 == 1).map(|k| k as u64 + 1).sum();
            count += u64::from(s as f64 == w);
        }
        let p_eq = count as f64 / (1u64 << n) as f64;
        prop_assert!((p_xy + p_yx - p_eq - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn partitions_are_disjoint_and_seeded(seed in any::<u64>(), n in 1usize..6, size in 1usize..20, extra in 0usize..30) {
        let ids: Vec<u32> = (0..(n * size + extra) as u32).collect();
        let a = partition_frames(&ids, n, size, seed).unwrap();
        let b = partition_frames(&ids, n, size, seed).unwrap();
        prop_assert_eq!(&a, &b);
        let all: BTreeSet<u32> = a.subsets.iter().flatten().copied().collect();
        prop_assert_eq!(all.len(), n * size);
        prop_assert!(a.subsets.iter().all(|s| s.len() == size));
    }
}

#[test]
fn disjoint_subsets_conserve_ground_truth() {
    let schema = TripletSchema::bundled();
    let gt = throughput_ground_truth(4, 120, 3, 32, 32, &schema).unwrap();
    let preds = Predictions::Grounded(noisy_predictions(5, &gt).unwrap());
    let cfg = EvalConfig::new(Mode::Seg);
    let full = evaluate(&gt, &preds, &cfg, &schema).unwrap();
    let keys: Vec<_> = gt.iter().map(|f| f.key()).collect();
    let part = partition_frames(&keys, 4, 30, 9).unwrap();
    for c in Component::ALL {
        let mut gt_sum = 0;
        let mut pred_sum = 0;
        for s in &part.subsets {
            let subset: BTreeSet<_> = s.iter().cloned().collect();
            let r = evaluate_subset(&gt, &preds, &subset, &cfg, &schema).unwrap();
            gt_sum += r.components[&c].gt_count;
            pred_sum += r.components[&c].pred_count;
        }
        assert_eq!(gt_sum, full.components[&c].gt_count);
        assert_eq!(pred_sum, full.components[&c].pred_count);
    }
    let everything: BTreeSet<_> = keys.into_iter().collect();
    let same = evaluate_subset(&gt, &preds, &everything, &cfg, &schema).unwrap();
    assert_eq!(same.to_json(), full.to_json());
}
