//! Sampling estimates of linear- and power-regularity constants on a ball.
//!
//! Each constant is the largest observed ratio of its defining inequality
//! over seeded uniform samples from `B(0; radius)` restricted to the
//! operators' domain. Ratios whose denominator falls below
//! [`RESIDUAL_FLOOR`] are skipped. These are estimates, not certificates.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{residual, NonexpansiveOp, OperatorSet};
use crate::error::{Error, Result};
use crate::hilbert::{BlockLayout, Point};
use crate::seeds;

/// Denominators below this value are excluded from ratio maxima.
pub const RESIDUAL_FLOOR: f64 = 1e-9;

/// Rejection sampling gives up after this many draws per requested sample.
const MAX_DRAWS_PER_SAMPLE: usize = 1000;

/// Estimated regularity constants and their provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityEstimate {
    /// Per-operator linear-regularity constants `κ̂_i`.
    pub kappa_i: Vec<f64>,
    /// Linear-regularity constant of the fixed-set collection `κ̂₀`.
    pub kappa_0: f64,
    /// `κ̂_c = max_i κ̂_i`.
    pub kappa_c: f64,
    /// Power-regularity constant `ν̂`.
    pub nu: f64,
    pub sample_radius: f64,
    pub sample_count: usize,
    pub seed: u64,
}

/// Draws `samples` points uniformly from `B(0; radius) ∩ {accept}`.
pub fn sample_points(
    layout: &Arc<BlockLayout>,
    radius: f64,
    samples: usize,
    seed: u64,
    accept: impl Fn(&[f64]) -> bool,
) -> Result<Vec<Point>> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sample radius {radius} must be > 0"
        )));
    }
    let n = layout.dim();
    let mut rng = seeds::from_seed(seed);
    let mut out = Vec::with_capacity(samples);
    let mut draws = 0usize;
    while out.len() < samples {
        draws += 1;
        if draws > MAX_DRAWS_PER_SAMPLE * samples.max(1) {
            return Err(Error::DegenerateEstimate(
                "sampling region has (almost) no overlap with the operator domain".into(),
            ));
        }
        let dir: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let u: f64 = rng.random();
        let r = radius * u.powf(1.0 / n as f64);
        let x: Vec<f64> = dir.iter().map(|v| r * v / norm).collect();
        if accept(&x) {
            out.push(Point::new(x, Arc::clone(layout))?);
        }
    }
    Ok(out)
}

/// `κ̂ = max d_{Fix(T)}(x) / ‖x − T(x)‖` over samples with residual above the floor.
pub fn estimate_linear_regularity(
    op: &NonexpansiveOp,
    layout: &Arc<BlockLayout>,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let pts = sample_points(layout, radius, samples, seed, |x| op.in_domain(x))?;
    linear_ratio_max(op, &pts)?.ok_or_else(|| {
        Error::DegenerateEstimate(format!(
            "all sampled residuals of {} below {RESIDUAL_FLOOR:e}",
            op.name()
        ))
    })
}

fn linear_ratio_max(op: &NonexpansiveOp, pts: &[Point]) -> Result<Option<f64>> {
    let mut best: Option<f64> = None;
    for x in pts {
        let res = residual(op, x)?;
        if res < RESIDUAL_FLOOR {
            continue;
        }
        let d = x.dist(&op.project_fixed(x)?)?;
        let ratio = d / res;
        best = Some(best.map_or(ratio, |b| b.max(ratio)));
    }
    Ok(best)
}

/// `ν̂ = max d_{X*}(x) / Σ_i ‖x − F_i(x)‖` over samples with denominator above the floor.
pub fn estimate_power_regularity(
    ops: &OperatorSet,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if ops.common().is_none() {
        return Err(Error::MissingProjector("common fixed set".into()));
    }
    let pts = sample_points(ops.layout(), radius, samples, seed, |x| ops.in_domain(x))?;
    power_ratio_max(ops, &pts)?.ok_or_else(|| {
        Error::DegenerateEstimate(format!("all residual sums below {RESIDUAL_FLOOR:e}"))
    })
}

fn power_ratio_max(ops: &OperatorSet, pts: &[Point]) -> Result<Option<f64>> {
    let mut best: Option<f64> = None;
    for x in pts {
        let mut sum = 0.0;
        for op in ops.ops() {
            sum += residual(op, x)?;
        }
        if sum < RESIDUAL_FLOOR {
            continue;
        }
        let d = x.dist(&ops.project_common(x)?)?;
        let ratio = d / sum;
        best = Some(best.map_or(ratio, |b| b.max(ratio)));
    }
    Ok(best)
}

/// Estimates `κ̂_i`, `κ̂₀`, `κ̂_c` and `ν̂` on one shared sample set.
pub fn estimate_regularity(
    ops: &OperatorSet,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<RegularityEstimate> {
    if ops.common().is_none() {
        return Err(Error::MissingProjector("common fixed set".into()));
    }
    let pts = sample_points(ops.layout(), radius, samples, seed, |x| ops.in_domain(x))?;
    let mut kappa_i = Vec::with_capacity(ops.len());
    for (i, op) in ops.ops().iter().enumerate() {
        let k = linear_ratio_max(op, &pts)?.ok_or_else(|| {
            Error::DegenerateEstimate(format!("operator {i}: all sampled residuals below floor"))
        })?;
        kappa_i.push(k);
    }
    let mut kappa_0: Option<f64> = None;
    for x in &pts {
        let mut dmax = 0.0f64;
        for op in ops.ops() {
            dmax = dmax.max(x.dist(&op.project_fixed(x)?)?);
        }
        if dmax < RESIDUAL_FLOOR {
            continue;
        }
        let r = x.dist(&ops.project_common(x)?)? / dmax;
        kappa_0 = Some(kappa_0.map_or(r, |b| b.max(r)));
    }
    let kappa_0 = kappa_0.ok_or_else(|| {
        Error::DegenerateEstimate("all sampled fixed-set distances below floor".into())
    })?;
    let nu = power_ratio_max(ops, &pts)?
        .ok_or_else(|| Error::DegenerateEstimate("all residual sums below floor".into()))?;
    let kappa_c = kappa_i.iter().copied().fold(0.0, f64::max);
    Ok(RegularityEstimate {
        kappa_i,
        kappa_0,
        kappa_c,
        nu,
        sample_radius: radius,
        sample_count: samples,
        seed,
    })
}

/// Power-regularity constant implied by linear regularity of each operator
/// (`κ_i`) and of their fixed sets (`μ`): `μ · max_i κ_i`.
pub fn check_proposition1(kappa_list: &[f64], mu: f64) -> f64 {
    mu * kappa_list.iter().copied().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{ConvexSet, FixedSetOracle, SetSpec};

    fn layout1() -> Arc<BlockLayout> {
        Arc::new(BlockLayout::single(1).unwrap())
    }

    fn interval() -> NonexpansiveOp {
        NonexpansiveOp::projection(
            ConvexSet::from_spec(&SetSpec::Box {
                lo: vec![0.0],
                hi: vec![0.5],
            })
            .unwrap(),
        )
    }

    #[test]
    fn projection_is_linearly_regular_with_constant_one() {
        let layout = Arc::new(BlockLayout::single(3).unwrap());
        let ball = NonexpansiveOp::projection(
            ConvexSet::from_spec(&SetSpec::Ball {
                center: vec![1.0, 0.0, 0.0],
                radius: 0.5,
            })
            .unwrap(),
        );
        for radius in [1.0, 10.0] {
            let k = estimate_linear_regularity(&ball, &layout, radius, 2000, 3).unwrap();
            assert!((k - 1.0).abs() < 1e-9, "{k}");
        }
    }

    #[test]
    fn identity_has_no_usable_samples() {
        let r = estimate_linear_regularity(&NonexpansiveOp::Identity, &layout1(), 1.0, 100, 1);
        assert!(matches!(r, Err(Error::DegenerateEstimate(_))));
    }

    #[test]
    fn square_is_not_linearly_regular_near_one() {
        // closed form of the ratio: x / (x(1 − x)) = 1/(1 − x)
        let k = estimate_linear_regularity(&NonexpansiveOp::Square, &layout1(), 0.99, 10_000, 5)
            .unwrap();
        assert!(k > 50.0, "{k}");
        assert!(k <= 1.0 / (1.0 - 0.99) + 1e-9);
    }

    #[test]
    fn example_pair_power_regular_with_constant_two() {
        let ops = OperatorSet::new(
            vec![NonexpansiveOp::Square, interval()],
            Some(FixedSetOracle::Set(
                ConvexSet::from_spec(&SetSpec::Box {
                    lo: vec![0.0],
                    hi: vec![0.0],
                })
                .unwrap(),
            )),
            layout1(),
        )
        .unwrap();
        let nu = estimate_power_regularity(&ops, 0.999, 20_000, 9).unwrap();
        assert!(nu <= 2.0 + 1e-6, "{nu}");
        assert!(nu > 1.9, "{nu}");
    }

    #[test]
    fn single_projection_power_regularity_is_one() {
        let set = ConvexSet::from_spec(&SetSpec::Halfspace {
            normal: vec![1.0, 2.0],
            offset: 0.5,
        })
        .unwrap();
        let ops = OperatorSet::new(
            vec![NonexpansiveOp::projection(set.clone())],
            Some(FixedSetOracle::Set(set)),
            Arc::new(BlockLayout::single(2).unwrap()),
        )
        .unwrap();
        let nu = estimate_power_regularity(&ops, 5.0, 2000, 4).unwrap();
        assert!((nu - 1.0).abs() < 1e-9);
    }

    #[test]
    fn proposition1_examples() {
        assert_eq!(check_proposition1(&[1.0, 1.0], 1.0), 1.0);
        assert_eq!(check_proposition1(&[2.0, 3.0], 2.0), 6.0);
    }

    #[test]
    fn deterministic_for_seed() {
        let a = sample_points(&layout1(), 1.0, 10, 42, |_| true).unwrap();
        let b = sample_points(&layout1(), 1.0, 10, 42, |_| true).unwrap();
        assert_eq!(a, b);
    }
}
