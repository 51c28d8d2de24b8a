//! Paired method comparison over disjoint frame subsets.
//!
//! Frames are shuffled with a seeded xoshiro256** generator (state filled by
//! splitmix64 from the 64-bit seed) using Fisher–Yates, then cut into
//! consecutive chunks. Per-subset metric pairs are compared with a one-sided
//! Wilcoxon signed-rank test (alternative: median of `a - b` is positive).

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Largest sample (after dropping zero differences) handled by exact
/// enumeration in [`wilcoxon_one_sided`].
pub const EXACT_MAX_N: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubsetPartition<T> {
    pub seed: u64,
    pub subset_size: usize,
    pub subsets: Vec<Vec<T>>,
}

/// The generator behind [`partition_frames`].
pub fn seeded_rng(seed: u64) -> Xoshiro256StarStar {
    Xoshiro256StarStar::seed_from_u64(seed)
}

/// In-place Fisher–Yates shuffle.
pub fn shuffle<T, R: Rng>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

/// Splits `frame_ids` into `n_subsets` disjoint subsets of `subset_size`.
/// Frames left over after the last subset are unused.
pub fn partition_frames<T: Clone>(
    frame_ids: &[T],
    n_subsets: usize,
    subset_size: usize,
    seed: u64,
) -> Result<SubsetPartition<T>> {
    if n_subsets == 0 || subset_size == 0 {
        return Err(Error::InvalidInput(
            "subset count and size must be positive".into(),
        ));
    }
    let needed = n_subsets
        .checked_mul(subset_size)
        .ok_or_else(|| Error::InvalidInput("subset count × size overflows".into()))?;
    if needed > frame_ids.len() {
        return Err(Error::InvalidInput(format!(
            "{n_subsets} subsets of {subset_size} frames need {needed} frames, only {} available",
            frame_ids.len()
        )));
    }
    let mut order: Vec<usize> = (0..frame_ids.len()).collect();
    shuffle(&mut order, &mut seeded_rng(seed));
    let subsets = order[..needed]
        .chunks(subset_size)
        .map(|chunk| chunk.iter().map(|&i| frame_ids[i].clone()).collect())
        .collect();
    Ok(SubsetPartition {
        seed,
        subset_size,
        subsets,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WilcoxonResult {
    /// Sum of the ranks of positive differences.
    #[serde(rename = "W")]
    pub statistic: f64,
    pub n_effective: usize,
    pub p_value: f64,
    pub method: WilcoxonMethod,
}

/// Signed ranks of the non-zero differences, doubled so that average ranks
/// of ties stay integral. Returns `(doubled_ranks, is_positive, tie_sizes)`.
fn doubled_signed_ranks(x: &[f64], y: &[f64]) -> Result<(Vec<u64>, Vec<bool>, Vec<usize>)> {
    if x.len() != y.len() {
        return Err(Error::Stats(format!(
            "paired samples differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::Stats("empty samples".into()));
    }
    let mut diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    if let Some(d) = diffs.iter().find(|d| !d.is_finite()) {
        return Err(Error::Stats(format!("non-finite difference {d}")));
    }
    diffs.retain(|&d| d != 0.0);
    if diffs.is_empty() {
        return Err(Error::Stats("all paired differences are zero".into()));
    }
    diffs.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let n = diffs.len();
    let mut ranks = vec![0u64; n];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && diffs[j].abs() == diffs[i].abs() {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j; twice their mean is i+1+j
        for r in &mut ranks[i..j] {
            *r = (i + 1 + j) as u64;
        }
        ties.push(j - i);
        i = j;
    }
    let positive = diffs.iter().map(|&d| d > 0.0).collect();
    Ok((ranks, positive, ties))
}

/// One-sided signed-rank test of `x` over `y`, choosing exact enumeration
/// for up to [`EXACT_MAX_N`] non-zero differences and the normal
/// approximation beyond.
pub fn wilcoxon_one_sided(x: &[f64], y: &[f64]) -> Result<WilcoxonResult> {
    let (ranks, _, _) = doubled_signed_ranks(x, y)?;
    let method = if ranks.len() <= EXACT_MAX_N {
        WilcoxonMethod::Exact
    } else {
        WilcoxonMethod::NormalApprox
    };
    wilcoxon_one_sided_with(x, y, method)
}

pub fn wilcoxon_one_sided_with(
    x: &[f64],
    y: &[f64],
    method: WilcoxonMethod,
) -> Result<WilcoxonResult> {
    let (ranks, positive, ties) = doubled_signed_ranks(x, y)?;
    let n = ranks.len();
    let w2: u64 = ranks
        .iter()
        .zip(&positive)
        .filter(|(_, &p)| p)
        .map(|(r, _)| r)
        .sum();
    let statistic = w2 as f64 / 2.0;
    let p_value = match method {
        WilcoxonMethod::Exact => exact_upper_tail(&ranks, w2)?,
        WilcoxonMethod::NormalApprox => {
            let nf = n as f64;
            let mean = nf * (nf + 1.0) / 4.0;
            let tie_term: f64 = ties
                .iter()
                .map(|&t| (t as f64).powi(3) - t as f64)
                .sum::<f64>()
                / 48.0;
            let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
            let z = (statistic - mean - 0.5) / var.sqrt();
            0.5 * erfc(z / std::f64::consts::SQRT_2)
        }
    };
    Ok(WilcoxonResult {
        statistic,
        n_effective: n,
        p_value: p_value.clamp(0.0, 1.0),
        method,
    })
}

/// `P(W ≥ w_obs)` under the null, counting all 2^n sign assignments through
/// the distribution of the doubled rank sum.
fn exact_upper_tail(doubled_ranks: &[u64], w2_obs: u64) -> Result<f64> {
    let n = doubled_ranks.len();
    if n > 100 {
        return Err(Error::Stats(format!(
            "exact distribution not supported for n = {n}"
        )));
    }
    let total: u64 = doubled_ranks.iter().sum();
    // counts[s] = number of sign assignments with doubled positive-rank sum s
    let mut counts = vec![0u128; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in doubled_ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            let c = counts[s];
            if c != 0 {
                counts[s + r] += c;
            }
        }
        reach += r;
    }
    let tail: u128 = counts[w2_obs as usize..].iter().sum();
    Ok(tail as f64 / 2f64.powi(n as i32))
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedValue {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonSummary {
    pub median_a: f64,
    pub median_b: f64,
    pub median_delta: f64,
    pub a_better: usize,
    pub b_better: usize,
    pub ties: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub per_subset: Vec<PairedValue>,
    pub wilcoxon: WilcoxonResult,
    pub summary: ComparisonSummary,
}

/// Tests whether method A beats method B on paired per-subset metrics.
pub fn compare_methods(a: &[f64], b: &[f64]) -> Result<Comparison> {
    if a.len() != b.len() {
        return Err(Error::Stats(format!(
            "subset counts differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let wilcoxon = wilcoxon_one_sided(a, b)?;
    let deltas: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let summary = ComparisonSummary {
        median_a: median(a),
        median_b: median(b),
        median_delta: median(&deltas),
        a_better: deltas.iter().filter(|&&d| d > 0.0).count(),
        b_better: deltas.iter().filter(|&&d| d < 0.0).count(),
        ties: deltas.iter().filter(|&&d| d == 0.0).count(),
    };
    Ok(Comparison {
        per_subset: a
            .iter()
            .zip(b)
            .map(|(&a, &b)| PairedValue { a, b })
            .collect(),
        wilcoxon,
        summary,
    })
}

impl Comparison {
    pub fn render(&self, label_a: &str, label_b: &str) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>6} {:>12} {:>12} {:>12}",
            "subset", label_a, label_b, "delta"
        );
        for (i, p) in self.per_subset.iter().enumerate() {
            let _ = writeln!(
                out,
                "{:>6} {:>12.4} {:>12.4} {:>+12.4}",
                i,
                p.a,
                p.b,
                p.a - p.b
            );
        }
        let s = &self.summary;
        let _ = writeln!(
            out,
            "{:>6} {:>12.4} {:>12.4} {:>+12.4}",
            "median", s.median_a, s.median_b, s.median_delta
        );
        let w = &self.wilcoxon;
        let _ = writeln!(
            out,
            "one-sided Wilcoxon signed-rank ({label_a} > {label_b}): W = {}, n = {}, p = {:.6} ({})",
            w.statistic,
            w.n_effective,
            w.p_value,
            match w.method {
                WilcoxonMethod::Exact => "exact",
                WilcoxonMethod::NormalApprox => "normal approximation",
            }
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Walks all 2^n sign patterns over the (undoubled) average ranks.
    fn brute_force_p(x: &[f64], y: &[f64]) -> (f64, f64) {
        let d: Vec<f64> = x
            .iter()
            .zip(y)
            .map(|(a, b)| a - b)
            .filter(|d| *d != 0.0)
            .collect();
        let n = d.len();
        let rank_of = |v: f64| {
            let less = d.iter().filter(|o| o.abs() < v.abs()).count() as f64;
            let equal = d.iter().filter(|o| o.abs() == v.abs()).count() as f64;
            less + (equal + 1.0) / 2.0
        };
        let ranks: Vec<f64> = d.iter().map(|&v| rank_of(v)).collect();
        let w: f64 = d
            .iter()
            .zip(&ranks)
            .filter(|(v, _)| **v > 0.0)
            .map(|(_, r)| r)
            .sum();
        let mut hits = 0u64;
        for mask in 0u64..(1 << n) {
            let s: f64 = (0..n)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| ranks[i])
                .sum();
            if s >= w - 1e-9 {
                hits += 1;
            }
        }
        (w, hits as f64 / (1u64 << n) as f64)
    }

    #[test]
    fn all_positive_twelve() {
        let x: Vec<f64> = (0..12).map(|i| 10.0 + i as f64).collect();
        let y: Vec<f64> = (0..12).map(|i| 9.5 + i as f64 * 0.9).collect();
        let r = wilcoxon_one_sided(&x, &y).unwrap();
        assert_eq!(r.method, WilcoxonMethod::Exact);
        assert_eq!(r.n_effective, 12);
        assert_eq!(r.statistic, 78.0);
        assert!((r.p_value - 1.0 / 4096.0).abs() < 1e-15);
    }

    #[test]
    fn identical_samples_error() {
        assert!(wilcoxon_one_sided(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(wilcoxon_one_sided(&[1.0], &[1.0, 2.0]).is_err());
        assert!(compare_methods(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(compare_methods(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn textbook_ten_pairs_match_enumeration() {
        // paired measurements with a tie in |d| and one zero difference
        let x = [
            125.0, 115.0, 130.0, 140.0, 140.0, 115.0, 140.0, 125.0, 140.0, 135.0,
        ];
        let y = [
            110.0, 122.0, 125.0, 120.0, 140.0, 124.0, 123.0, 137.0, 135.0, 145.0,
        ];
        let r = wilcoxon_one_sided(&x, &y).unwrap();
        let (w, p) = brute_force_p(&x, &y);
        assert_eq!(r.n_effective, 9);
        assert_eq!(r.statistic, w);
        assert!((r.p_value - p).abs() < 1e-12, "{} vs {p}", r.p_value);
    }

    #[test]
    fn large_n_uses_normal_approximation() {
        let x: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..30).map(|i| (i as f64 * 0.11).cos()).collect();
        let r = wilcoxon_one_sided(&x, &y).unwrap();
        assert_eq!(r.method, WilcoxonMethod::NormalApprox);
        assert!((0.0..=1.0).contains(&r.p_value));
    }

    #[test]
    fn partition_examples() {
        let frames: Vec<u32> = (0..6100).collect();
        let p = partition_frames(&frames, 12, 500, 7).unwrap();
        assert_eq!(p.subsets.len(), 12);
        let mut all: Vec<u32> = p.subsets.iter().flatten().copied().collect();
        assert!(p.subsets.iter().all(|s| s.len() == 500));
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 6000);

        let whole = partition_frames(&frames[..10], 1, 10, 3).unwrap();
        let mut s = whole.subsets[0].clone();
        s.sort_unstable();
        assert_eq!(s, frames[..10].to_vec());

        assert_eq!(partition_frames(&frames, 12, 500, 7).unwrap(), p);
        assert_ne!(
            partition_frames(&frames, 12, 500, 8).unwrap().subsets,
            p.subsets
        );
        assert!(partition_frames(&frames, 13, 500, 7).is_err());
        assert!(partition_frames(&frames, 0, 500, 7).is_err());
    }

    #[test]
    fn compare_summary() {
        let a = [0.5, 0.6, 0.7, 0.4];
        let b = [0.4, 0.6, 0.5, 0.45];
        let c = compare_methods(&a, &b).unwrap();
        assert_eq!(
            (c.summary.a_better, c.summary.b_better, c.summary.ties),
            (2, 1, 1)
        );
        assert_eq!(c.wilcoxon.n_effective, 3);
        assert!(c.render("A", "B").contains("p = "));
    }
}
