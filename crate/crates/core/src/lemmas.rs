//! Numerical checks of the auxiliary inequalities used by the convergence
//! analysis. Each check returns a [`LemmaReport`] counting violations.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diagnostics::RunTrace;
use crate::engine::{mix, run, BlockScheme, EngineKind, RunOptions};
use crate::error::{Error, Result};
use crate::hilbert::{inner, weighted_norm_sq, BlockLayout, Point, WeightedNorm};
use crate::operators::{averaged, spectral_norm, ConvexSet, NonexpansiveOp, SetSpec};
use crate::scenarios::{preset, Scenario};
use crate::seeds::{self, StreamRng};

/// Outcome of one inequality checked over many samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub name: String,
    pub samples: usize,
    pub violations: usize,
    /// Smallest `rhs − lhs` seen (negative means violated).
    pub worst_margin: f64,
}

impl LemmaReport {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            samples: 0,
            violations: 0,
            worst_margin: f64::INFINITY,
        }
    }

    /// Records `lhs ≤ rhs + slack`.
    fn push(&mut self, lhs: f64, rhs: f64, slack: f64) {
        self.samples += 1;
        let margin = rhs - lhs;
        self.worst_margin = self.worst_margin.min(margin);
        if !(margin >= -slack) {
            self.violations += 1;
        }
    }

    pub fn passed(&self) -> bool {
        self.samples > 0 && self.violations == 0
    }
}

/// Kronecker product `A ⊗ B`.
pub fn kronecker(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = (a.nrows(), a.ncols());
    let (p, q) = (b.nrows(), b.ncols());
    DMatrix::from_fn(n * p, m * q, |r, c| a[(r / p, c / q)] * b[(r % p, c % q)])
}

/// `‖A ⊗ B‖ ≤ n · max|a_ij| · ‖B‖` for square `A` of size `n`.
pub fn check_kronecker_bound(a: &DMatrix<f64>, b: &DMatrix<f64>, report: &mut LemmaReport) {
    let n = a.nrows() as f64;
    let amax = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let lhs = spectral_norm(&kronecker(a, b));
    report.push(lhs, n * amax * spectral_norm(b), 1e-9);
}

/// `2⟨y − z, y − T(y)⟩ ≥ ‖T(y) − y‖²` for `z ∈ Fix(T)`.
pub fn check_fixed_point_inequality(
    op: &NonexpansiveOp,
    y: &Point,
    z: &Point,
    report: &mut LemmaReport,
) -> Result<()> {
    let ty = op.eval(y)?;
    let r = y.sub(&ty)?;
    let lhs = r.norm_sq();
    let rhs = 2.0 * inner(&y.sub(z)?, &r)?;
    report.push(lhs, rhs, 1e-10 * (1.0 + lhs.abs() + rhs.abs()));
    Ok(())
}

/// `‖r x + (1 − r) y‖² = r‖x‖² + (1 − r)‖y‖² − r(1 − r)‖x − y‖²`, checked
/// as two one-sided inequalities with relative tolerance `1e-10`.
pub fn check_convex_identity(x: &Point, y: &Point, r: f64, report: &mut LemmaReport) -> Result<()> {
    let lhs = x.scale(r).add(&y.scale(1.0 - r))?.norm_sq();
    let rhs = r * x.norm_sq() + (1.0 - r) * y.norm_sq() - r * (1.0 - r) * x.sub(y)?.norm_sq();
    let scale = x.norm_sq().abs() + y.norm_sq().abs() + x.sub(y)?.norm_sq() * (r * (1.0 - r)).abs();
    let tol = 1e-10 * scale.max(1e-300);
    report.samples += 1;
    let margin = tol - (lhs - rhs).abs();
    report.worst_margin = report.worst_margin.min(margin);
    if margin < 0.0 {
        report.violations += 1;
    }
    Ok(())
}

/// `‖F_i(x_{i,k+1}) − x_{i,k+1}‖ ≤ ‖F_i(x̂_{i,k}) − x̂_{i,k}‖ + 2α_{i,k}‖ε_{i,k}‖`
/// at every step of a recorded run.
pub fn check_residual_recursion(trace: &RunTrace, report: &mut LemmaReport) {
    for (k, step) in trace.steps.iter().enumerate() {
        let eps = &trace.records[k].error_norms;
        let next = &trace.records[k + 1].residuals;
        for i in 0..trace.agents {
            report.push(
                next[i],
                step.mixed_residuals[i] + 2.0 * step.alphas[i] * eps[i],
                1e-10,
            );
        }
    }
}

fn random_direction(rng: &mut StreamRng, layout: &Arc<BlockLayout>, norm: f64) -> Point {
    let n = layout.dim();
    loop {
        let d: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let s = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if s > 0.0 {
            let c = d.into_iter().map(|v| norm * v / s).collect();
            return Point::new(c, Arc::clone(layout)).expect("finite by construction");
        }
    }
}

/// Monte-Carlo form of the block-coordinate residual bound at a fixed mixed
/// point `x̂`:
///
/// ```text
/// mean |||F(x⁺) − x⁺|||²  ≤  4 |||F(x̂) − x̂|||² + 16 α² · mean |||b∘ε|||² + 3·SE
/// ```
///
/// where `x⁺` is one block update of `x̂` with fresh activations `b` and
/// errors `ε` of norm `eps_norm`.
#[allow(clippy::too_many_arguments)]
pub fn check_block_residual_bound(
    op: &NonexpansiveOp,
    xhat: &Point,
    alpha: f64,
    eps_norm: f64,
    probs: &[f64],
    draws: usize,
    seed: u64,
    report: &mut LemmaReport,
) -> Result<()> {
    if draws < 2 {
        return Err(Error::InvalidParameter("need at least two draws".into()));
    }
    let w = WeightedNorm::new(probs.to_vec())?;
    let layout = xhat.layout();
    let mut blocks = BlockScheme::new(probs.to_vec(), seed, 1)?;
    let mut rng = seeds::stream(seed, "lemma/errors");
    let f = op.eval(xhat)?;
    let base = weighted_norm_sq(&f.sub(xhat)?, &w)?;
    let (mut sum, mut sum_sq, mut err_sum) = (0.0, 0.0, 0.0);
    for _ in 0..draws {
        let b = blocks.draw(0);
        let eps = random_direction(&mut rng, layout, eps_norm);
        let mut x = xhat.coords().to_vec();
        let mut masked = vec![0.0; x.len()];
        for (l, on) in b.iter().enumerate() {
            if *on {
                for j in layout.block_range(l) {
                    x[j] = xhat.coords()[j]
                        + alpha * (f.coords()[j] + eps.coords()[j] - xhat.coords()[j]);
                    masked[j] = eps.coords()[j];
                }
            }
        }
        let x = Point::new(x, Arc::clone(layout))?;
        let v = weighted_norm_sq(&op.eval(&x)?.sub(&x)?, &w)?;
        sum += v;
        sum_sq += v * v;
        err_sum += weighted_norm_sq(&Point::new(masked, Arc::clone(layout))?, &w)?;
    }
    let r = draws as f64;
    let mean = sum / r;
    let var = ((sum_sq - r * mean * mean) / (r - 1.0)).max(0.0);
    let se = (var / r).sqrt();
    let rhs = 4.0 * base + 16.0 * alpha * alpha * err_sum / r;
    report.push(mean, rhs + 3.0 * se, 1e-12);
    Ok(())
}

fn random_matrix(rng: &mut StreamRng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-2.0..2.0))
}

fn random_stochastic(rng: &mut StreamRng, n: usize) -> DMatrix<f64> {
    let mut a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>());
    for i in 0..n {
        let s = a.row(i).sum();
        for j in 0..n {
            a[(i, j)] /= s;
        }
    }
    a
}

/// Kronecker bound over `samples` random pairs (half row-stochastic, half general `A`).
pub fn lemma_kronecker(samples: usize, seed: u64) -> LemmaReport {
    let mut rng = seeds::stream(seed, "lemma/kronecker");
    let mut report = LemmaReport::new("kronecker-norm-bound");
    for s in 0..samples {
        let n = rng.random_range(1..=5);
        let d = rng.random_range(1..=4);
        let a = if s % 2 == 0 {
            random_stochastic(&mut rng, n)
        } else {
            random_matrix(&mut rng, n, n)
        };
        let b = random_matrix(&mut rng, d, d);
        check_kronecker_bound(&a, &b, &mut report);
    }
    report
}

/// Convex-combination identity over `samples` random `(x, y, r)` with entries in `[−2, 2]`.
pub fn lemma_convex_identity(samples: usize, seed: u64) -> Result<LemmaReport> {
    let mut rng = seeds::stream(seed, "lemma/identity");
    let mut report = LemmaReport::new("convex-combination-identity");
    for _ in 0..samples {
        let n = rng.random_range(1..=6);
        let x = Point::from_vec((0..n).map(|_| rng.random_range(-2.0..=2.0)).collect())?;
        let y = x.with_coords((0..n).map(|_| rng.random_range(-2.0..=2.0)).collect())?;
        let r = rng.random_range(-2.0..=2.0);
        check_convex_identity(&x, &y, r, &mut report)?;
    }
    Ok(report)
}

/// Fixed-point inequality for `op` over `samples` random `y` in `B(0; 5)`,
/// with `z` the projection of an independent random point onto `Fix(T)`.
pub fn lemma_fixed_point(
    op: &NonexpansiveOp,
    dim: usize,
    samples: usize,
    seed: u64,
) -> Result<LemmaReport> {
    let layout = Arc::new(BlockLayout::single(dim)?);
    let mut rng = seeds::stream(seed, &format!("lemma/fixed-point/{}", op.name()));
    let mut report = LemmaReport::new(&format!("fixed-point-inequality[{}]", op.name()));
    for _ in 0..samples {
        let y = Point::new(
            (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect(),
            Arc::clone(&layout),
        )?;
        let w = Point::new(
            (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect(),
            Arc::clone(&layout),
        )?;
        let z = op.project_fixed(&w)?;
        check_fixed_point_inequality(op, &y, &z, &mut report)?;
    }
    Ok(report)
}

/// Mixed points `x̂_{i,k}` of a recorded run at step `k`.
pub fn mixed_points(trace: &RunTrace, a_k: &DMatrix<f64>, k: usize) -> Result<Vec<Point>> {
    let states = trace
        .states
        .get(k)
        .ok_or_else(|| Error::InsufficientData(format!("no recorded state at k = {k}")))?;
    mix(a_k, states)
}

/// Operators used for the fixed-point inequality, with their dimension.
pub fn lemma_catalog() -> Result<Vec<(NonexpansiveOp, usize)>> {
    let h = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
    let g = DVector::from_vec(vec![1.0, -1.0, 0.0]);
    let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, -1.0, 0.0, 1.0, 1.0]);
    let b = DVector::from_vec(vec![1.0, 2.0]);
    let proj = |spec: SetSpec| -> Result<NonexpansiveOp> {
        Ok(NonexpansiveOp::projection(ConvexSet::from_spec(&spec)?))
    };
    let halfspace = proj(SetSpec::Halfspace {
        normal: vec![1.0, -2.0, 0.5],
        offset: 0.3,
    })?;
    Ok(vec![
        (halfspace.clone(), 3),
        (
            proj(SetSpec::Ball {
                center: vec![1.0, 0.0, -1.0],
                radius: 2.0,
            })?,
            3,
        ),
        (
            proj(SetSpec::Box {
                lo: vec![-1.0, 0.0, -2.0],
                hi: vec![1.0, 0.5, 2.0],
            })?,
            3,
        ),
        (
            proj(SetSpec::Affine {
                matrix: vec![vec![1.0, 1.0, 1.0]],
                rhs: vec![1.0],
            })?,
            3,
        ),
        (NonexpansiveOp::linear_equation(a, b, None)?, 3),
        (NonexpansiveOp::gradient_step(h, g, 0.3)?, 3),
        (averaged(halfspace, 0.3)?, 3),
        (NonexpansiveOp::Negation, 3),
        (NonexpansiveOp::Identity, 3),
    ])
}

fn preset_run(name: &str, engine: EngineKind, iters: usize) -> Result<(Scenario, RunTrace)> {
    let sc = Scenario::from_spec(preset(name)?)?;
    let trace = run(&sc, &RunOptions::new(engine, iters, 0.0))?;
    Ok((sc, trace))
}

/// Block bound at the mixed points of a recorded D-IBKM run, for every agent
/// and each listed step.
pub fn lemma_block_bound(steps: &[usize], draws: usize, seed: u64) -> Result<LemmaReport> {
    let last = steps.iter().copied().max().unwrap_or(0);
    let (sc, trace) = preset_run("feasibility-blocks", EngineKind::Dibkm, last + 1)?;
    let probs = sc
        .spec
        .blocks
        .as_ref()
        .ok_or_else(|| Error::Unsupported("preset has no block scheme".into()))?
        .probs
        .clone();
    let mut report = LemmaReport::new("block-residual-bound");
    for &k in steps {
        let xhat = mixed_points(&trace, &sc.graph.matrix(k), k)?;
        for (i, x) in xhat.iter().enumerate() {
            let s = seeds::derive_seed(seed, &format!("lemma/block/{k}/{i}"));
            let alpha = sc.schedule.alpha(i, k);
            let eps = sc.spec.errors.magnitude(k);
            check_block_residual_bound(sc.ops.op(i), x, alpha, eps, &probs, draws, s, &mut report)?;
        }
    }
    Ok(report)
}

/// Residual recursion along inexact runs of the bundled feasibility and
/// linear-equation presets.
pub fn lemma_residual_recursion(iters: usize) -> Result<LemmaReport> {
    let mut report = LemmaReport::new("residual-recursion");
    for name in [
        "feasibility-2halfspace",
        "linear-3x3",
        "feasibility-blocks",
        "feasibility-ball-box",
    ] {
        let (_, trace) = preset_run(name, EngineKind::Dikm, iters)?;
        check_residual_recursion(&trace, &mut report);
    }
    Ok(report)
}

/// The full battery at its standard sample sizes.
pub fn run_lemma_suite(seed: u64) -> Result<Vec<LemmaReport>> {
    let mut out = vec![lemma_kronecker(1000, seed)];
    let mut fixed = LemmaReport::new("fixed-point-inequality");
    for (op, dim) in lemma_catalog()? {
        let r = lemma_fixed_point(&op, dim, 1000, seed)?;
        fixed.samples += r.samples;
        fixed.violations += r.violations;
        fixed.worst_margin = fixed.worst_margin.min(r.worst_margin);
    }
    out.push(fixed);
    out.push(lemma_residual_recursion(500)?);
    out.push(lemma_convex_identity(10_000, seed)?);
    out.push(lemma_block_bound(&[0, 5, 20, 60], 10_000, seed)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronecker_matches_block_structure() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(1, 2, &[5.0, 6.0]);
        let k = kronecker(&a, &b);
        assert_eq!(
            k,
            DMatrix::from_row_slice(2, 4, &[5.0, 6.0, 10.0, 12.0, 15.0, 18.0, 20.0, 24.0])
        );
    }

    #[test]
    fn kronecker_bound_tight_for_all_ones() {
        // ‖J ⊗ I‖ = n exactly
        let a = DMatrix::from_element(3, 3, 1.0);
        let mut r = LemmaReport::new("t");
        check_kronecker_bound(&a, &DMatrix::identity(2, 2), &mut r);
        assert!(r.passed());
        assert!(r.worst_margin.abs() < 1e-9);
    }

    #[test]
    fn identity_detects_a_wrong_right_side() {
        let x = Point::from_vec(vec![1.0, 2.0]).unwrap();
        let y = x.with_coords(vec![-1.0, 0.5]).unwrap();
        let mut r = LemmaReport::new("t");
        check_convex_identity(&x, &y, 0.3, &mut r).unwrap();
        assert!(r.passed());
        // a fake "identity" without the cross term must be caught
        let lhs = x.scale(0.3).add(&y.scale(0.7)).unwrap().norm_sq();
        let wrong = 0.3 * x.norm_sq() + 0.7 * y.norm_sq();
        assert!((lhs - wrong).abs() > 1e-3);
    }

    #[test]
    fn fixed_point_inequality_flags_a_non_fixed_anchor() {
        // Fix(−Id) = {0}; anchoring at z = y = 1 gives 4 ≤ 0
        let op = NonexpansiveOp::Negation;
        let y = Point::from_vec(vec![1.0]).unwrap();
        let mut r = LemmaReport::new("t");
        check_fixed_point_inequality(&op, &y, &y, &mut r).unwrap();
        assert_eq!(r.violations, 1);
        check_fixed_point_inequality(&op, &y, &y.with_coords(vec![0.0]).unwrap(), &mut r).unwrap();
        assert_eq!(r.violations, 1);
    }

    #[test]
    fn catalog_satisfies_fixed_point_inequality() {
        for (op, dim) in lemma_catalog().unwrap() {
            let r = lemma_fixed_point(&op, dim, 200, 11).unwrap();
            assert!(r.passed(), "{r:?}");
        }
    }

    #[test]
    fn residual_recursion_holds_on_preset_runs() {
        let r = lemma_residual_recursion(100).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn block_bound_holds_at_early_states() {
        let r = lemma_block_bound(&[0, 5], 2000, 4).unwrap();
        assert!(r.passed(), "{r:?}");
    }
}
