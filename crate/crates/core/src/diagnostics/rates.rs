use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::least_squares;

/// Values at or below this are treated as floating-point noise by rate fits.
pub const RATE_FLOOR: f64 = 1e-14;

/// Absolute slack allowed on a fitted exponent.
pub const RATE_SLACK: f64 = 0.1;

/// Minimum number of usable points for a rate fit.
pub const MIN_FIT_POINTS: usize = 20;

/// Fit of `r_k ≈ C·k^(−e)` on the trailing part of a series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCertificate {
    pub exponent: f64,
    pub constant: f64,
    pub target: f64,
    pub slack: f64,
    /// RMS residual of the log–log fit.
    pub fit_residual: f64,
    pub points: usize,
    pub first_k: usize,
    pub last_k: usize,
    pub passed: bool,
}

/// `m_k = min_{l ≤ k} r_l`.
pub fn running_min(series: &[f64]) -> Vec<f64> {
    let mut m = f64::INFINITY;
    series
        .iter()
        .map(|v| {
            m = m.min(*v);
            m
        })
        .collect()
}

/// Least-squares fit of `ln r_k` against `ln k` over `k ≥ ⌊(1 − window)·len⌋`,
/// `k ≥ 1`, `r_k > 1e-14`. Passes when the exponent is at least `target − slack`.
pub fn fit_rate(series: &[f64], window: f64, target: f64, slack: f64) -> Result<RateCertificate> {
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "fit window {window} outside (0, 1]"
        )));
    }
    let start = (((1.0 - window) * series.len() as f64).floor() as usize).max(1);
    let pts: Vec<(f64, f64)> = series
        .iter()
        .enumerate()
        .skip(start)
        .filter(|(_, r)| **r > RATE_FLOOR && r.is_finite())
        .map(|(k, r)| ((k as f64).ln(), r.ln()))
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData(format!(
            "{} usable points in the fit window, need {MIN_FIT_POINTS}",
            pts.len()
        )));
    }
    let (slope, intercept, rms) = least_squares(&pts);
    let exponent = -slope;
    Ok(RateCertificate {
        exponent,
        constant: intercept.exp(),
        target,
        slack,
        fit_residual: rms,
        points: pts.len(),
        first_k: pts[0].0.exp().round() as usize,
        last_k: pts[pts.len() - 1].0.exp().round() as usize,
        passed: exponent >= target - slack,
    })
}

/// Worst observed ratio `(d²_{k+1} − d²_k) / max_{⌊(k+1)/2⌋ ≤ l ≤ k} d²_l`,
/// the consensus perturbation of an otherwise nonincreasing distance series.
pub fn measured_gamma(d2: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..d2.len().saturating_sub(1) {
        let lo = (k + 1) / 2;
        let m = d2[lo..=k].iter().copied().fold(0.0, f64::max);
        if m > RATE_FLOOR {
            worst = worst.max((d2[k + 1] - d2[k]) / m);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn running_min_example() {
        assert_eq!(running_min(&[3.0, 1.0, 2.0, 0.5]), vec![3.0, 1.0, 1.0, 0.5]);
        assert_eq!(running_min(&[4.0, 3.0, 1.0]), vec![4.0, 3.0, 1.0]);
    }

    #[test]
    fn recovers_synthetic_power_laws() {
        let s: Vec<f64> = (0..400).map(|k| (k.max(1) as f64).powf(-0.5)).collect();
        let c = fit_rate(&s, 0.5, 0.5, RATE_SLACK).unwrap();
        assert!((c.exponent - 0.5).abs() < 1e-6);
        assert!(c.passed);
        let s: Vec<f64> = (0..400)
            .map(|k| 5.0 * (k.max(1) as f64).powf(-1.2))
            .collect();
        let c = fit_rate(&s, 0.5, 1.5, RATE_SLACK).unwrap();
        assert!((c.exponent - 1.2).abs() < 1e-6);
        assert!((c.constant.ln() - 5f64.ln()).abs() < 1e-6);
        assert!(!c.passed);
    }

    #[test]
    fn too_few_points() {
        assert!(fit_rate(&[1.0; 30], 0.5, 0.0, 0.1).is_err());
        assert!(fit_rate(&vec![0.0; 100], 0.5, 0.0, 0.1).is_err());
    }

    #[test]
    fn gamma_of_monotone_series_is_zero() {
        let s: Vec<f64> = (0..50).map(|k| 0.9f64.powi(k)).collect();
        assert_eq!(measured_gamma(&s), 0.0);
    }
}
