use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::StatsError;

/// Largest nonzero-pair count with an exact null distribution.
pub const EXACT_LIMIT: usize = 25;

const MIN_PAIRS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectLabel {
    Negligible,
    Small,
    Medium,
    Large,
}

impl std::fmt::Display for EffectLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EffectLabel::Negligible => "negligible",
            EffectLabel::Small => "small",
            EffectLabel::Medium => "medium",
            EffectLabel::Large => "large",
        })
    }
}

/// Cohen's bands for r: .10 small, .30 medium, .50 large.
pub fn effect_label(r: f64) -> EffectLabel {
    if r >= 0.5 {
        EffectLabel::Large
    } else if r >= 0.3 {
        EffectLabel::Medium
    } else if r >= 0.1 {
        EffectLabel::Small
    } else {
        EffectLabel::Negligible
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PValueMethod {
    Exact,
    Normal,
    /// Every difference was zero.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub p_value: f64,
    /// Interval for the median of `b − a`.
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub effect_size_r: f64,
    pub label: EffectLabel,
    /// Nonzero pairs entering the test.
    pub n: usize,
    pub zeros_dropped: usize,
    /// `min(W+, W−)`.
    pub statistic: f64,
    pub method: PValueMethod,
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Number of sign assignments giving each value of `2·W+`, for ranks given
/// doubled (so tied averages are integers).
fn doubled_rank_sum_counts(doubled: &[usize]) -> Vec<f64> {
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    counts
}

/// Null distribution of the signed-rank statistic for `n` untied ranks:
/// entry `s` counts the sign assignments with `W+ = s`.
pub fn signed_rank_null_counts(n: usize) -> Vec<f64> {
    let doubled: Vec<usize> = (1..=n).map(|r| 2 * r).collect();
    doubled_rank_sum_counts(&doubled).into_iter().step_by(2).collect()
}

fn standard_normal() -> Normal {
    Normal::standard()
}

/// Two-sided signed-rank test on the differences `b − a`.
///
/// Zero differences are dropped and ties get average ranks. Up to
/// [`EXACT_LIMIT`] nonzero pairs the p-value is exact, above it comes from
/// the normal approximation with tie and continuity corrections. The effect
/// size is `|z| / √n` with `z` recovered from the p-value, capped at 1.
pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)]) -> Result<TestResult, StatsError> {
    let diffs: Vec<f64> = pairs.iter().map(|(a, b)| b - a).collect();
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nonzero.len();
    let zeros_dropped = diffs.len() - n;
    if n == 0 {
        if diffs.len() < MIN_PAIRS {
            return Err(StatsError::TooFewPairs { needed: MIN_PAIRS, got: 0 });
        }
        return Ok(TestResult {
            p_value: 1.0,
            ci_lower: 0.0,
            ci_upper: 0.0,
            effect_size_r: 0.0,
            label: EffectLabel::Negligible,
            n: 0,
            zeros_dropped,
            statistic: 0.0,
            method: PValueMethod::Degenerate,
        });
    }
    if n < MIN_PAIRS {
        return Err(StatsError::TooFewPairs { needed: MIN_PAIRS, got: n });
    }

    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = ranks.iter().zip(&nonzero).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w = w_plus.min(total - w_plus);

    let (p_value, method) = if n <= EXACT_LIMIT {
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let counts = doubled_rank_sum_counts(&doubled);
        let limit = (2.0 * w).round() as usize;
        let tail: f64 = counts[..=limit].iter().sum();
        ((2.0 * tail / 2f64.powi(n as i32)).min(1.0), PValueMethod::Exact)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let tie_term: f64 = tie_sizes(&abs).iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
        let sd = (nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term).sqrt();
        let z = ((mean - w).abs() - 0.5).max(0.0) / sd;
        ((2.0 * standard_normal().sf(z)).min(1.0), PValueMethod::Normal)
    };

    // an exact p far in the tail can put |z|/√n past 1
    let z = standard_normal().inverse_cdf(p_value / 2.0).abs();
    let r = if p_value >= 1.0 { 0.0 } else { (z / (n as f64).sqrt()).min(1.0) };
    let (ci_lower, ci_upper) = hodges_lehmann_ci(pairs, 0.95)?;
    Ok(TestResult {
        p_value,
        ci_lower,
        ci_upper,
        effect_size_r: r,
        label: effect_label(r),
        n,
        zeros_dropped,
        statistic: w,
        method,
    })
}

fn tie_sizes(sorted_or_not: &[f64]) -> Vec<usize> {
    let mut v = sorted_or_not.to_vec();
    v.sort_by(f64::total_cmp);
    let mut sizes = Vec::new();
    let mut i = 0;
    while i < v.len() {
        let mut j = i + 1;
        while j < v.len() && v[j] == v[i] {
            j += 1;
        }
        if j - i > 1 {
            sizes.push(j - i);
        }
        i = j;
    }
    sizes
}

/// Confidence interval for the median difference `b − a` from the ordered
/// Walsh averages of all differences.
///
/// The depth `k` into the sorted averages is the largest with
/// `P(T ≤ k − 1) ≤ (1 − level)/2` under the signed-rank null (exact up to
/// [`EXACT_LIMIT`] pairs, normal beyond). Very small samples that cannot
/// reach the level get the full range of the averages.
pub fn hodges_lehmann_ci(pairs: &[(f64, f64)], level: f64) -> Result<(f64, f64), StatsError> {
    let n = pairs.len();
    if n < MIN_PAIRS {
        return Err(StatsError::TooFewPairs { needed: MIN_PAIRS, got: n });
    }
    let d: Vec<f64> = pairs.iter().map(|(a, b)| b - a).collect();
    let mut walsh = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            walsh.push((d[i] + d[j]) / 2.0);
        }
    }
    walsh.sort_by(f64::total_cmp);
    let m = walsh.len();
    let half_alpha = (1.0 - level) / 2.0;

    let k = if n <= EXACT_LIMIT {
        let counts = signed_rank_null_counts(n);
        let all = 2f64.powi(n as i32);
        let mut cum = 0.0;
        let mut k = 0;
        // P(T ≤ k−1) for increasing k
        for c in &counts {
            if (cum + c) / all > half_alpha {
                break;
            }
            cum += c;
            k += 1;
        }
        k
    } else {
        let nf = n as f64;
        let sd = (nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0).sqrt();
        let z = standard_normal().inverse_cdf(1.0 - half_alpha);
        (nf * (nf + 1.0) / 4.0 - z * sd).round() as usize
    };
    let k = k.clamp(1, m.div_ceil(2));
    Ok((walsh[k - 1], walsh[m - k]))
}
