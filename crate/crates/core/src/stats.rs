//! Two-sided Wilcoxon rank-sum (Mann–Whitney) test.
//!
//! Exact permutation p-values (with midranks for ties) when the number of rank
//! arrangements `C(n+m, n)` is at most [`EXACT_LIMIT`]; otherwise a normal
//! approximation with tie and continuity corrections.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

pub const EXACT_LIMIT: f64 = 1e6;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("both samples need at least one observation (got {0} and {1})")]
    EmptySample(usize, usize),
    #[error("samples contain a non-finite value")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankSumMethod {
    Exact,
    NormalApproximation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankSumResult {
    /// Mann–Whitney U of the first sample.
    pub u: f64,
    pub p_value: f64,
    pub method: RankSumMethod,
    /// Every observation in both samples is equal; `p_value` is 1.
    pub degenerate: bool,
}

/// Midranks (1-based) of `values`.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub fn wilcoxon_ranksum(a: &[f64], b: &[f64]) -> Result<RankSumResult, StatsError> {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return Err(StatsError::EmptySample(n, m));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let w: f64 = ranks[..n].iter().sum();
    let u = w - (n * (n + 1)) as f64 / 2.0;
    let degenerate = pooled.iter().all(|&v| v == pooled[0]);
    if degenerate {
        return Ok(RankSumResult {
            u,
            p_value: 1.0,
            method: RankSumMethod::Exact,
            degenerate,
        });
    }

    let total = n + m;
    if binomial(total, n) <= EXACT_LIMIT {
        let p = exact_p(&ranks, n, w);
        Ok(RankSumResult {
            u,
            p_value: p,
            method: RankSumMethod::Exact,
            degenerate,
        })
    } else {
        Ok(RankSumResult {
            u,
            p_value: normal_p(&pooled, n, m, u),
            method: RankSumMethod::NormalApproximation,
            degenerate,
        })
    }
}

/// Fraction of size-`n` rank subsets whose sum is at least as far from the
/// null mean as the observed sum. Midranks are multiples of 1/2, so sums are
/// tracked as integers in half-rank units.
fn exact_p(ranks: &[f64], n: usize, observed: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    // counts[j][s]: subsets of size j with doubled rank sum s
    let mut counts = vec![vec![0u64; max_sum + 1]; n + 1];
    counts[0][0] = 1;
    for &r in &doubled {
        for j in (1..=n).rev() {
            let (lower, upper) = counts.split_at_mut(j);
            let prev = &lower[j - 1];
            let cur = &mut upper[0];
            for s in (r..=max_sum).rev() {
                cur[s] += prev[s - r];
            }
        }
    }
    let total = ranks.len();
    let mean2 = (n * (total + 1)) as i64; // 2 · n(N+1)/2
    let obs_dev = ((2.0 * observed).round() as i64 - mean2).abs();
    let mut extreme = 0u64;
    let mut all = 0u64;
    for (s, &c) in counts[n].iter().enumerate() {
        all += c;
        if (s as i64 - mean2).abs() >= obs_dev {
            extreme += c;
        }
    }
    (extreme as f64 / all as f64).min(1.0)
}

fn normal_p(pooled: &[f64], n: usize, m: usize, u: f64) -> f64 {
    let total = (n + m) as f64;
    let mut sorted = pooled.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let (nf, mf) = (n as f64, m as f64);
    let var = nf * mf / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
    let mean = nf * mf / 2.0;
    let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * (1.0 - normal.cdf(z))).clamp(f64::MIN_POSITIVE, 1.0)
}
