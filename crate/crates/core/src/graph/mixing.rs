//! Backward products `A^{s:k} = A_{s−1} ⋯ A_k` and the absorption vectors
//! `π_k` they converge to.
//!
//! Rows of `A^{s:k}` agree in the limit `s → ∞`; their common value is `π_k`,
//! which satisfies `π_kᵀ = π_{k+1}ᵀ A_k`. The deviation
//! `max_{i,j} |a^{s:k}_{ij} − π_{j,k}|` decays like `ϖ ξ^{s−k}`; here `ξ̂` is
//! the least-squares slope of the log-deviation against `s − k` and `ϖ̂` is
//! the smallest constant making `ϖ̂ ξ̂^{s−k}` dominate every observed
//! deviation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::GraphSequence;
use crate::error::{Error, Result};

/// Deviations below this value count as converged and are excluded from the fit.
pub const FIT_FLOOR: f64 = 1e-11;

/// Row disagreement required at the horizon.
const CONTRACTION_TOLERANCE: f64 = 1e-10;

/// Mixing constants estimated from backward products.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingAnalysis {
    /// `π_k` for `k = 0..=k_max`.
    pub pi: Vec<Vec<f64>>,
    pub varpi: f64,
    pub xi: f64,
    /// `π̲ = min_{k ≤ k_max, l} π_{l,k}`.
    pub pi_floor: f64,
    /// `a̲^{Q(N−1)}`.
    pub pi_floor_bound: f64,
    pub horizon: usize,
    /// RMS residual of the log-linear fit (0 when the fit is exact).
    pub fit_residual: f64,
    /// Number of `(s − k, deviation)` points used in the fit.
    pub fit_points: usize,
}

impl MixingAnalysis {
    /// `π_k`, repeating the last analysed vector for periodic extensions.
    pub fn pi_at(&self, k: usize) -> &[f64] {
        &self.pi[k.min(self.pi.len() - 1)]
    }

    /// Whether `π̲ ≥ a̲^{Q(N−1)}`.
    pub fn pi_floor_ok(&self) -> bool {
        self.pi_floor >= self.pi_floor_bound * (1.0 - 1e-12)
    }
}

/// `A_{s−1} ⋯ A_k`; identity when `s == k`.
pub fn backward_product(g: &GraphSequence, s: usize, k: usize) -> DMatrix<f64> {
    assert!(s >= k, "backward product needs s ≥ k");
    let n = g.agents();
    let mut p = DMatrix::<f64>::identity(n, n);
    for t in k..s {
        p = g.matrix(t) * p;
    }
    p
}

fn row_disagreement(p: &DMatrix<f64>) -> f64 {
    (0..p.ncols())
        .map(|j| {
            let col = p.column(j);
            col.max() - col.min()
        })
        .fold(0.0, f64::max)
}

fn column_means(p: &DMatrix<f64>) -> Vec<f64> {
    let n = p.nrows() as f64;
    (0..p.ncols()).map(|j| p.column(j).sum() / n).collect()
}

/// Estimates `π_k` (`k ≤ k_max`), `ξ̂`, `ϖ̂` and `π̲` from backward products
/// of length up to `horizon`.
pub fn compute_mixing(g: &GraphSequence, k_max: usize, horizon: usize) -> Result<MixingAnalysis> {
    let n = g.agents();
    let mut pis = Vec::with_capacity(k_max + 1);
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut devs_all: Vec<(usize, f64)> = Vec::new();
    for k in 0..=k_max {
        let mut prods = Vec::with_capacity(horizon + 1);
        let mut p = DMatrix::<f64>::identity(n, n);
        prods.push(p.clone());
        for t in k..k + horizon {
            p = g.matrix(t) * p;
            prods.push(p.clone());
        }
        let dis = row_disagreement(&p);
        if dis > CONTRACTION_TOLERANCE {
            return Err(Error::NonContraction {
                horizon,
                disagreement: dis,
            });
        }
        let pi = column_means(&p);
        for (t, prod) in prods.iter().enumerate() {
            let dev = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .map(|(i, j)| (prod[(i, j)] - pi[j]).abs())
                .fold(0.0, f64::max);
            devs_all.push((t, dev));
            if dev > FIT_FLOOR {
                points.push((t as f64, dev.ln()));
            }
        }
        pis.push(pi);
    }

    let distinct_t = {
        let mut ts: Vec<i64> = points.iter().map(|(t, _)| *t as i64).collect();
        ts.sort_unstable();
        ts.dedup();
        ts.len()
    };
    let (xi, fit_residual) = if distinct_t >= 2 {
        let (slope, _intercept, rms) = least_squares(&points);
        (slope.exp().min(1.0 - f64::EPSILON), rms)
    } else {
        // deviations collapse below the floor after one step; report the
        // largest rate consistent with that
        let d0 = devs_all
            .iter()
            .filter(|(t, _)| *t == 0)
            .map(|(_, d)| *d)
            .fold(0.0, f64::max)
            .max(FIT_FLOOR);
        ((FIT_FLOOR / d0).min(1.0 - f64::EPSILON), 0.0)
    };
    // below the floor the deviations are round-off, not mixing
    let varpi = devs_all
        .iter()
        .filter(|(t, d)| *t == 0 || *d > FIT_FLOOR)
        .map(|(t, d)| d / xi.powi(*t as i32))
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let pi_floor = pis
        .iter()
        .flat_map(|p| p.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let pi_floor_bound = g.floor().powi((g.window() * (n - 1)) as i32);
    Ok(MixingAnalysis {
        pi: pis,
        varpi,
        xi,
        pi_floor,
        pi_floor_bound,
        horizon,
        fit_residual,
        fit_points: points.len(),
    })
}

/// Least-squares line through `(x, y)`: returns `(slope, intercept, rms residual)`.
pub(crate) fn least_squares(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (points
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, intercept, rms)
}

/// `π_0, …, π_{k_end}` by computing `π_{k_end}` from a backward product of
/// length `horizon` and running `π_k = A_kᵀ π_{k+1}` down to `k = 0`.
pub fn absorption_sequence(
    g: &GraphSequence,
    k_end: usize,
    horizon: usize,
) -> Result<Vec<Vec<f64>>> {
    let p = backward_product(g, k_end + horizon, k_end);
    let dis = row_disagreement(&p);
    if dis > CONTRACTION_TOLERANCE {
        return Err(Error::NonContraction {
            horizon,
            disagreement: dis,
        });
    }
    let mut out = vec![Vec::new(); k_end + 1];
    let mut cur = DVector::from_vec(column_means(&p));
    out[k_end] = cur.iter().copied().collect();
    for k in (0..k_end).rev() {
        cur = g.matrix(k).transpose() * cur;
        // renormalize against round-off drift
        let s = cur.sum();
        cur /= s;
        out[k] = cur.iter().copied().collect();
    }
    Ok(out)
}

/// Smallest horizon of the form `64·2^j` (at most `max_horizon`) whose
/// backward product from `k` has rows agreeing to the contraction tolerance.
pub fn contraction_horizon(g: &GraphSequence, k: usize, max_horizon: usize) -> Result<usize> {
    let mut h = 64usize;
    loop {
        let dis = row_disagreement(&backward_product(g, k + h, k));
        if dis <= CONTRACTION_TOLERANCE {
            return Ok(h);
        }
        if h >= max_horizon {
            return Err(Error::NonContraction {
                horizon: h,
                disagreement: dis,
            });
        }
        h = (2 * h).min(max_horizon);
    }
}

/// A horizon that contracts from every start in `ks`; what `compute_mixing`
/// needs for `ks = 0..=k_max`. Contraction from one start says nothing about
/// the next on a randomized sequence.
pub fn uniform_horizon(
    g: &GraphSequence,
    ks: std::ops::RangeInclusive<usize>,
    max_horizon: usize,
) -> Result<usize> {
    let mut h = 64usize;
    for k in ks {
        // the product from k only gets longer, so start from the best so far
        while row_disagreement(&backward_product(g, k + h, k)) > CONTRACTION_TOLERANCE {
            if h >= max_horizon {
                return contraction_horizon(g, k, max_horizon);
            }
            h = (2 * h).min(max_horizon);
        }
    }
    Ok(h)
}

/// `max_k ‖π_kᵀ − π_{k+1}ᵀ A_k‖_∞` over consecutive pairs.
pub fn stationarity_defect(g: &GraphSequence, pis: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..pis.len().saturating_sub(1) {
        let a = g.matrix(k);
        let next = DVector::from_column_slice(&pis[k + 1]);
        let lhs = a.transpose() * next;
        for (x, y) in lhs.iter().zip(&pis[k]) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}
