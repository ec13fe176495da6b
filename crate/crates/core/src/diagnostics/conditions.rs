use serde::{Deserialize, Serialize};

use crate::engine::RelaxationSchedule;
use crate::error::{Error, Result};
use crate::graph::MixingAnalysis;
use crate::operators::RegularityEstimate;

/// Step-size admissibility check against an estimated bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub name: String,
    /// `min{…, 1 − α}`.
    pub bound: f64,
    /// The first term of the minimum, before capping at `1 − α`.
    pub raw_bound: f64,
    pub alpha_c: f64,
    /// `bound − α_c`.
    pub margin: f64,
    pub satisfied: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} = {v} must be finite and positive"
        )))
    }
}

fn check_mixing(xi: f64, varpi: f64, pi_floor: f64) -> Result<()> {
    if !(0.0..1.0).contains(&xi) {
        return Err(Error::InvalidParameter(format!("ξ = {xi} outside [0, 1)")));
    }
    positive("ϖ", varpi)?;
    positive("π̲", pi_floor)
}

/// `(γ₂, bound)` for the deterministic distributed iteration:
///
/// ```text
/// γ₂    = 24 N³ ϖ² ξ² / (1 − ξ)² · (2 + 1 / (4 N κ_c² κ₀²))
/// bound = min{ (1 / (2 κ_c κ₀)) · √(π̲ / (2 N γ₂)), 1 − α }
/// ```
#[allow(clippy::too_many_arguments)]
pub fn condition17_bound(
    kappa_c: f64,
    kappa_0: f64,
    n: usize,
    varpi: f64,
    xi: f64,
    pi_floor: f64,
    alpha: f64,
) -> Result<(f64, f64, f64)> {
    positive("κ_c", kappa_c)?;
    positive("κ₀", kappa_0)?;
    check_mixing(xi, varpi, pi_floor)?;
    let nf = n as f64;
    let gamma2 = 24.0 * nf.powi(3) * varpi * varpi * xi * xi / ((1.0 - xi) * (1.0 - xi))
        * (2.0 + 1.0 / (4.0 * nf * kappa_c * kappa_c * kappa_0 * kappa_0));
    let raw = if gamma2 == 0.0 {
        f64::INFINITY
    } else {
        (pi_floor / (2.0 * nf * gamma2)).sqrt() / (2.0 * kappa_c * kappa_0)
    };
    Ok((gamma2, raw, raw.min(1.0 - alpha)))
}

/// Block-coordinate bound:
///
/// ```text
/// min{ p₀ (1 − ξ) / (4 N² ϖ ξ) · √(π̲ / (2 (p₀² + 8 N ν²))), 1 − α }
/// ```
pub fn condition07_bound(
    nu: f64,
    n: usize,
    varpi: f64,
    xi: f64,
    pi_floor: f64,
    p0: f64,
    alpha: f64,
) -> Result<(f64, f64)> {
    positive("ν", nu)?;
    positive("p₀", p0)?;
    if p0 > 1.0 {
        return Err(Error::InvalidParameter(format!("p₀ = {p0} exceeds 1")));
    }
    check_mixing(xi, varpi, pi_floor)?;
    let nf = n as f64;
    let raw = if xi == 0.0 {
        f64::INFINITY
    } else {
        p0 * (1.0 - xi) / (4.0 * nf * nf * varpi * xi)
            * (pi_floor / (2.0 * (p0 * p0 + 8.0 * nf * nu * nu))).sqrt()
    };
    Ok((raw, raw.min(1.0 - alpha)))
}

fn report(
    name: &str,
    raw: f64,
    bound: f64,
    alpha_c: f64,
    gamma2: Option<f64>,
    note: Option<String>,
) -> ConditionReport {
    ConditionReport {
        name: name.into(),
        bound,
        raw_bound: raw,
        alpha_c,
        margin: bound - alpha_c,
        satisfied: alpha_c < bound,
        gamma2,
        note,
    }
}

/// Checks `α_c` against the deterministic-iteration bound with estimated constants.
pub fn check_condition17(
    est: &RegularityEstimate,
    mix: &MixingAnalysis,
    sched: &RelaxationSchedule,
    n: usize,
) -> Result<ConditionReport> {
    let (g2, raw, bound) = condition17_bound(
        est.kappa_c,
        est.kappa_0,
        n,
        mix.varpi,
        mix.xi,
        mix.pi_floor,
        sched.floor(),
    )?;
    Ok(report(
        "condition17",
        raw,
        bound,
        sched.cap(),
        Some(g2),
        None,
    ))
}

/// Checks `α_c` against the block-coordinate bound.
pub fn check_condition07(
    nu: f64,
    mix: &MixingAnalysis,
    sched: &RelaxationSchedule,
    n: usize,
    p0: f64,
    blocks: usize,
) -> Result<ConditionReport> {
    let (raw, bound) =
        condition07_bound(nu, n, mix.varpi, mix.xi, mix.pi_floor, p0, sched.floor())?;
    let note = (p0 == 1.0 && blocks == 1).then(|| {
        "single block updated with probability one: deterministic distributed iteration".to_string()
    });
    Ok(report("condition07", raw, bound, sched.cap(), None, note))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition17_example() {
        let (g2, _, b) = condition17_bound(1.0, 1.0, 1, 1.0, 0.5, 1.0, 0.5).unwrap();
        assert!((g2 - 54.0).abs() < 1e-12);
        // independent arithmetic: 0.5 / √108
        assert!((b - 0.5 / 108f64.sqrt()).abs() < 1e-15);
        assert!((b - 0.0481).abs() < 1e-4);
    }

    #[test]
    fn condition17_instant_mixing() {
        let (g2, _, b) = condition17_bound(2.0, 3.0, 4, 1.0, 0.0, 0.2, 0.3).unwrap();
        assert_eq!(g2, 0.0);
        assert_eq!(b, 0.7);
        assert!(condition17_bound(0.0, 1.0, 1, 1.0, 0.5, 1.0, 0.5).is_err());
    }

    #[test]
    fn condition07_example_and_limit() {
        let (_, b) = condition07_bound(1.0, 1, 1.0, 0.5, 1.0, 1.0, 0.5).unwrap();
        assert!((b - 0.25 / 18f64.sqrt()).abs() < 1e-15);
        assert!((b - 0.0589).abs() < 1e-4);
        let (_, b) = condition07_bound(1e12, 1, 1.0, 0.5, 1.0, 1.0, 0.5).unwrap();
        assert!(b < 1e-12);
        assert!(condition07_bound(1.0, 1, 1.0, 0.5, 1.0, 0.0, 0.5).is_err());
    }
}
