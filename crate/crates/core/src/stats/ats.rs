//! ANOVA-type statistic for the condition × order interaction of a 2×2
//! mixed design (one whole-plot factor, one repeated factor), on joint ranks.

use nalgebra::{Matrix2, Matrix4, Vector4};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::wilcoxon::average_ranks;
use super::StatsError;
use crate::exec;
use crate::experiment::Order;

const MIN_PER_GROUP: usize = 4;
/// Exhaustive relabeling up to this many splits, Monte Carlo beyond.
const EXACT_SPLITS: u64 = 20_000;
const PERMUTATION_DRAWS: usize = 10_000;
const PERMUTATION_SEED: u64 = 0x5eed;

/// One participant's factor score under each condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectScores {
    pub order: Order,
    pub rea: f64,
    pub ada: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AtsMethod {
    /// F(f̂, ∞) approximation of the ANOVA-type statistic.
    Ats,
    /// Relabeling test, used when a group's ranks do not vary.
    Permutation,
    /// All scores equal.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtsResult {
    pub p_value: f64,
    pub statistic: f64,
    pub df: f64,
    pub method: AtsMethod,
    /// Relative treatment effects for (A, REA), (A, ADA), (B, REA), (B, ADA).
    pub relative_effects: [f64; 4],
}

impl AtsResult {
    pub fn degenerate(&self) -> bool {
        self.method != AtsMethod::Ats
    }
}

/// Joint ranks laid out as `[(rea, ada)]` per group.
struct Ranked {
    groups: [Vec<[f64; 2]>; 2],
    total: f64,
}

fn rank_jointly(scores: &[SubjectScores]) -> Ranked {
    let flat: Vec<f64> = scores.iter().flat_map(|s| [s.rea, s.ada]).collect();
    let ranks = average_ranks(&flat);
    let mut groups: [Vec<[f64; 2]>; 2] = [Vec::new(), Vec::new()];
    for (i, s) in scores.iter().enumerate() {
        let g = match s.order {
            Order::A => 0,
            Order::B => 1,
        };
        groups[g].push([ranks[2 * i], ranks[2 * i + 1]]);
    }
    Ranked { groups, total: flat.len() as f64 }
}

fn group_mean(rows: &[[f64; 2]]) -> [f64; 2] {
    let n = rows.len() as f64;
    let mut m = [0.0; 2];
    for r in rows {
        m[0] += r[0] / n;
        m[1] += r[1] / n;
    }
    m
}

fn relative_effects(r: &Ranked) -> Vector4<f64> {
    let a = group_mean(&r.groups[0]);
    let b = group_mean(&r.groups[1]);
    Vector4::new(a[0], a[1], b[0], b[1]).map(|m| (m - 0.5) / r.total)
}

/// `P₂ ⊗ P₂`, the interaction projection.
fn interaction_matrix() -> Matrix4<f64> {
    let p = Matrix2::new(0.5, -0.5, -0.5, 0.5);
    p.kronecker(&p)
}

fn check_design(scores: &[SubjectScores]) -> Result<(), StatsError> {
    for order in [Order::A, Order::B] {
        let n = scores.iter().filter(|s| s.order == order).count();
        if n < MIN_PER_GROUP {
            return Err(StatsError::Design(format!(
                "order group {order:?} has {n} participants, need {MIN_PER_GROUP}"
            )));
        }
    }
    if scores.iter().any(|s| !(s.rea.is_finite() && s.ada.is_finite())) {
        return Err(StatsError::Design("non-finite score".into()));
    }
    Ok(())
}

/// Rank-based test of the condition × order interaction.
///
/// Uses the ANOVA-type statistic `F = N p̂ᵀTp̂ / tr(TV̂)` with
/// `f̂ = tr(TV̂)² / tr(TV̂TV̂)` numerator degrees of freedom. When a group's
/// rank covariance vanishes the statistic is undefined and the p-value comes
/// from [`permutation_interaction`] instead.
pub fn ats_interaction(scores: &[SubjectScores]) -> Result<AtsResult, StatsError> {
    check_design(scores)?;
    let ranked = rank_jointly(scores);
    let p = relative_effects(&ranked);
    let effects = [p[0], p[1], p[2], p[3]];
    if scores.iter().all(|s| s.rea == scores[0].rea && s.ada == scores[0].rea) {
        return Ok(AtsResult { p_value: 1.0, statistic: 0.0, df: 0.0, method: AtsMethod::Constant, relative_effects: effects });
    }

    let n_total = ranked.total;
    let mut v = Matrix4::zeros();
    let mut any_flat = false;
    for (g, rows) in ranked.groups.iter().enumerate() {
        let ni = rows.len() as f64;
        let mean = group_mean(rows);
        let mut s = Matrix2::zeros();
        for r in rows {
            let d = nalgebra::Vector2::new(r[0] - mean[0], r[1] - mean[1]);
            s += d * d.transpose();
        }
        s /= n_total * n_total * (ni - 1.0);
        any_flat |= s.trace() == 0.0;
        // V̂ = N · diag(Ŝ_A / n_A, Ŝ_B / n_B)
        v.fixed_view_mut::<2, 2>(2 * g, 2 * g).copy_from(&(s * (n_total / ni)));
    }

    let t = interaction_matrix();
    let tv = t * v;
    let trace = tv.trace();
    if any_flat || trace <= 0.0 {
        let mut res = permutation_interaction(scores, PERMUTATION_DRAWS, PERMUTATION_SEED)?;
        res.relative_effects = effects;
        return Ok(res);
    }
    let f_stat = n_total * (p.transpose() * t * p)[(0, 0)] / trace;
    let df = trace * trace / (tv * tv).trace();
    let chi = ChiSquared::new(df).map_err(|e| StatsError::Design(e.to_string()))?;
    Ok(AtsResult {
        p_value: chi.sf(df * f_stat).clamp(0.0, 1.0),
        statistic: f_stat,
        df,
        method: AtsMethod::Ats,
        relative_effects: effects,
    })
}

/// Squared interaction contrast of the relative effects.
fn contrast(r: &Ranked) -> f64 {
    let p = relative_effects(r);
    let c = p[0] - p[1] - p[2] + p[3];
    c * c
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Relabeling test of the interaction: order-group labels are shuffled
/// across participants while each participant's pair of scores stays intact.
///
/// Small designs enumerate every split; larger ones draw `draws` seeded
/// relabelings and report `(hits + 1) / (draws + 1)`.
pub fn permutation_interaction(scores: &[SubjectScores], draws: usize, seed: u64) -> Result<AtsResult, StatsError> {
    check_design(scores)?;
    let base = rank_jointly(scores);
    let pairs: Vec<[f64; 2]> = base.groups.iter().flatten().copied().collect();
    let n_a = base.groups[0].len();
    let observed = contrast(&base);
    let tol = 1e-12 * observed.max(1e-300);
    let split = |labels: &[bool]| -> f64 {
        let mut groups: [Vec<[f64; 2]>; 2] = [Vec::new(), Vec::new()];
        for (pair, &in_a) in pairs.iter().zip(labels) {
            groups[usize::from(!in_a)].push(*pair);
        }
        contrast(&Ranked { groups, total: base.total })
    };
    let n = pairs.len();
    let p_value = if binomial(n as u64, n_a as u64) <= EXACT_SPLITS {
        let mut hits = 0u64;
        let mut all = 0u64;
        let mut labels = vec![false; n];
        // walk every n-bit mask with n_a bits set (Gosper's hack)
        let mut mask: u64 = (1 << n_a) - 1;
        while mask < 1 << n {
            for (i, l) in labels.iter_mut().enumerate() {
                *l = mask >> i & 1 == 1;
            }
            all += 1;
            if split(&labels) >= observed - tol {
                hits += 1;
            }
            let low = mask & mask.wrapping_neg();
            let ripple = mask + low;
            mask = (((ripple ^ mask) >> 2) / low) | ripple;
        }
        hits as f64 / all as f64
    } else {
        let indices: Vec<u64> = (0..draws as u64).collect();
        let hits: usize = exec::map(&indices, |&i| {
            let mut rng = ChaCha8Rng::seed_from_u64(exec::derive_seed(seed, i));
            let mut labels: Vec<bool> = (0..n).map(|j| j < n_a).collect();
            labels.shuffle(&mut rng);
            usize::from(split(&labels) >= observed - tol)
        })
        .into_iter()
        .sum();
        (hits + 1) as f64 / (draws + 1) as f64
    };
    let p = relative_effects(&base);
    Ok(AtsResult {
        p_value,
        statistic: observed,
        df: 0.0,
        method: AtsMethod::Permutation,
        relative_effects: [p[0], p[1], p[2], p[3]],
    })
}
