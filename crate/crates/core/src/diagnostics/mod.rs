//! Per-iteration metrics, rate fits and step-size admissibility checks.
//!
//! Network averages are weighted by the absorption vector `π_k` of the graph
//! sequence: `x̄_k = Σ_i π_{i,k} x_{i,k}` for consensus errors,
//! `d_k² = Σ_i π_{i,k} d²_{X*}(x_{i,k})` for distances, and
//! `q_k = Σ_i π_{i,k} P_{X*}(x_{i,k})` as the reference point of the
//! weighted-norm distance used by the block-coordinate method.

mod conditions;
mod export;
mod rates;

use serde::{Deserialize, Serialize};

use crate::engine::EngineKind;
use crate::error::{Error, Result};
use crate::hilbert::{convex_combine, weighted_norm_sq, Point, WeightedNorm};
use crate::operators::OperatorSet;

pub use conditions::{
    check_condition07, check_condition17, condition07_bound, condition17_bound, ConditionReport,
};
pub use export::{
    plot_tables, read_summary, read_table, read_trace_csv, write_plot_data, write_summary,
    write_trace_csv, RunSummary, TraceTable, PLOT_FILES, TRACE_HEADER,
};
pub use rates::{
    fit_rate, measured_gamma, running_min, RateCertificate, MIN_FIT_POINTS, RATE_FLOOR, RATE_SLACK,
};

/// Why a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopReason {
    Converged,
    Budget,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::Converged => "converged",
            StopReason::Budget => "budget",
        })
    }
}

/// Metrics of the state `x_{·,k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub k: usize,
    /// `‖F_i(x_{i,k}) − x_{i,k}‖`.
    pub residuals: Vec<f64>,
    /// `‖x_{i,k} − x̄_k‖`.
    pub consensus: Vec<f64>,
    /// `d_{X*}(x_{i,k})`, when a projector onto `X*` is available.
    pub distances: Option<Vec<f64>>,
    /// `‖ε_{i,k}‖` of the step leaving this state; zero on the final record.
    pub error_norms: Vec<f64>,
    pub d2: Option<f64>,
    /// `Σ_i π_{i,k} |||x_{i,k} − q_k|||²` (block-coordinate runs).
    pub weighted_d2: Option<f64>,
    pub max_residual: f64,
    pub max_consensus: f64,
}

/// Quantities of the step `k → k + 1` that are not visible from the states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub alphas: Vec<f64>,
    /// `‖F_i(x̂_{i,k}) − x̂_{i,k}‖`.
    pub mixed_residuals: Vec<f64>,
    /// Number of active blocks per agent (block-coordinate runs).
    pub active_blocks: Option<Vec<usize>>,
}

/// Everything recorded during one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub scenario: String,
    pub engine: EngineKind,
    pub seed: u64,
    pub agents: usize,
    pub records: Vec<IterRecord>,
    pub steps: Vec<StepRecord>,
    /// `x_{·,k}` for every recorded `k`, when state recording is enabled.
    pub states: Vec<Vec<Point>>,
    /// `π_k` for every recorded `k`.
    pub pis: Vec<Vec<f64>>,
    pub stop_reason: StopReason,
    pub fingerprint: String,
}

impl RunTrace {
    /// Number of iterations executed.
    pub fn iterations(&self) -> usize {
        self.records.len() - 1
    }

    pub fn last(&self) -> &IterRecord {
        self.records
            .last()
            .expect("a trace holds at least the initial record")
    }

    pub fn residual_series(&self, i: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.residuals[i]).collect()
    }

    pub fn max_residual_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.max_residual).collect()
    }

    pub fn max_consensus_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.max_consensus).collect()
    }

    pub fn d2_series(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.d2).collect()
    }

    pub fn weighted_d2_series(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.weighted_d2).collect()
    }
}

/// `m_k = min_{l ≤ k} ‖F_i(x_{i,l}) − x_{i,l}‖` for agent `i`.
pub fn running_min_residual(trace: &RunTrace, i: usize) -> Result<Vec<f64>> {
    if i >= trace.agents {
        return Err(Error::InvalidParameter(format!("agent {i} out of range")));
    }
    Ok(running_min(&trace.residual_series(i)))
}

/// `‖x_i − Σ_j π_j x_j‖` for every agent.
pub fn consensus_error(points: &[Point], pi: &[f64]) -> Result<Vec<f64>> {
    if points.len() != pi.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            got: pi.len(),
        });
    }
    let xbar = convex_combine(pi, points)?;
    points.iter().map(|x| x.dist(&xbar)).collect()
}

/// Computes the record of state `points` at time `k` with absorption vector `pi`.
pub fn record_state(
    ops: &OperatorSet,
    k: usize,
    points: &[Point],
    pi: &[f64],
    weights: Option<&WeightedNorm>,
) -> Result<IterRecord> {
    let residuals = points
        .iter()
        .zip(ops.ops())
        .map(|(x, op)| op.eval(x)?.dist(x))
        .collect::<Result<Vec<_>>>()?;
    let consensus = consensus_error(points, pi)?;
    let (distances, d2, weighted_d2) = match ops.common() {
        None => (None, None, None),
        Some(oracle) => {
            let proj = points
                .iter()
                .map(|x| oracle.project(x))
                .collect::<Result<Vec<_>>>()?;
            let dist = points
                .iter()
                .zip(&proj)
                .map(|(x, p)| x.dist(p))
                .collect::<Result<Vec<_>>>()?;
            let d2 = pi.iter().zip(&dist).map(|(w, d)| w * d * d).sum();
            let wd2 = match weights {
                None => None,
                Some(w) => {
                    let q = convex_combine(pi, &proj)?;
                    let mut acc = 0.0;
                    for (x, p) in points.iter().zip(pi) {
                        acc += p * weighted_norm_sq(&x.sub(&q)?, w)?;
                    }
                    Some(acc)
                }
            };
            (Some(dist), Some(d2), wd2)
        }
    };
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    Ok(IterRecord {
        k,
        max_residual: max(&residuals),
        max_consensus: max(&consensus),
        residuals,
        consensus,
        distances,
        error_norms: vec![0.0; points.len()],
        d2,
        weighted_d2,
    })
}

/// Pointwise mean and standard error over equally indexed series, truncated
/// to the shortest one.
pub fn monte_carlo_mean(series: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let r = series.len();
    if r == 0 {
        return Err(Error::InsufficientData("no repetitions".into()));
    }
    let len = series.iter().map(Vec::len).min().unwrap_or(0);
    let mut mean = vec![0.0; len];
    let mut se = vec![0.0; len];
    for k in 0..len {
        let m = series.iter().map(|s| s[k]).sum::<f64>() / r as f64;
        mean[k] = m;
        if r > 1 {
            let var = series.iter().map(|s| (s[k] - m).powi(2)).sum::<f64>() / (r - 1) as f64;
            se[k] = (var / r as f64).sqrt();
        }
    }
    Ok((mean, se))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: f64) -> Point {
        Point::from_vec(vec![v]).unwrap()
    }

    #[test]
    fn consensus_examples() {
        assert_eq!(
            consensus_error(&[p(1.0), p(1.0)], &[0.3, 0.7]).unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(
            consensus_error(&[p(0.0), p(2.0)], &[0.5, 0.5]).unwrap(),
            vec![1.0, 1.0]
        );
        let e = consensus_error(&[p(0.0), p(3.0)], &[2.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert!((e[0] - 1.0).abs() < 1e-15 && (e[1] - 2.0).abs() < 1e-15);
        assert!(consensus_error(&[p(0.0)], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn monte_carlo_mean_and_error() {
        let (m, se) = monte_carlo_mean(&[vec![1.0, 2.0, 9.0], vec![3.0, 2.0]]).unwrap();
        assert_eq!(m, vec![2.0, 2.0]);
        assert!((se[0] - 1.0).abs() < 1e-15);
        assert_eq!(se[1], 0.0);
    }
}
