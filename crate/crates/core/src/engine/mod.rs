//! Iteration engines: centralized inexact KM, distributed D-IKM and its
//! random block-coordinate variant D-IBKM.
//!
//! One iteration is a synchronized round: every agent mixes its neighbours'
//! points with the current weight matrix, then applies one relaxed step of
//! its own operator to the mixed point,
//!
//! ```text
//! x̂_i     = Σ_j a_ij x_j
//! x_i⁺    = x̂_i + α_i (F_i(x̂_i) + ε_i − x̂_i)
//! ```
//!
//! and in the block variant only the blocks with `b_il = 1` move.

mod blocks;
mod errors;
mod run;
mod schedule;

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{convex_combine, Point};
use crate::operators::{NonexpansiveOp, OperatorSet};

pub use blocks::BlockScheme;
pub use errors::{ErrorModel, ErrorSpec};
pub use run::{run, run_repeats, RunOptions, DIVERGENCE_LIMIT};
pub use schedule::{RelaxationSchedule, ScheduleSpec};

/// Which iteration to execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Km,
    Dikm,
    Dibkm,
}

impl std::fmt::Display for EngineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EngineKind::Km => "km",
            EngineKind::Dikm => "dikm",
            EngineKind::Dibkm => "dibkm",
        })
    }
}

/// Agent points at iteration `k`, and the mixed points that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub k: usize,
    pub x: Vec<Point>,
    /// `x̂_{i,k−1}`; `None` before the first step.
    pub xhat: Option<Vec<Point>>,
}

impl NetworkState {
    pub fn new(x: Vec<Point>) -> Result<Self> {
        let first = x.first().ok_or_else(|| {
            Error::InvalidParameter("network state needs at least one agent".into())
        })?;
        for p in &x[1..] {
            first.check_same(p)?;
        }
        Ok(Self {
            k: 0,
            x,
            xhat: None,
        })
    }

    pub fn agents(&self) -> usize {
        self.x.len()
    }
}

// The same expression order in every engine keeps reductions bit-identical.
#[inline]
fn relax(xh: f64, f: f64, e: f64, alpha: f64) -> f64 {
    xh + alpha * (f + e - xh)
}

/// `x + α(T(x) + ε − x)`.
pub fn km_step(op: &NonexpansiveOp, x: &Point, alpha: f64, eps: &Point) -> Result<Point> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!(
            "relaxation {alpha} outside [0, 1]"
        )));
    }
    x.check_same(eps)?;
    let fx = op.eval(x)?;
    let coords = x
        .coords()
        .iter()
        .zip(fx.coords())
        .zip(eps.coords())
        .map(|((xv, fv), ev)| relax(*xv, *fv, *ev, alpha))
        .collect();
    Ok(Point::from_parts(coords, Arc::clone(x.layout())))
}

/// `x̂_i = Σ_j a_ij x_j` for every agent.
pub fn mix(a: &DMatrix<f64>, x: &[Point]) -> Result<Vec<Point>> {
    let n = x.len();
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.nrows(),
        });
    }
    (0..n)
        .map(|i| {
            let w: Vec<f64> = a.row(i).iter().copied().collect();
            convex_combine(&w, x)
        })
        .collect()
}

fn check_inputs(
    ops: &OperatorSet,
    state: &NetworkState,
    alphas: &[f64],
    errors: &[Point],
) -> Result<()> {
    let n = ops.len();
    for (what, got) in [
        ("agents", state.agents()),
        ("relaxations", alphas.len()),
        ("errors", errors.len()),
    ] {
        if got != n {
            return Err(Error::InvalidParameter(format!(
                "{what}: expected {n}, got {got}"
            )));
        }
    }
    if **state.x[0].layout() != **ops.layout() {
        return Err(Error::LayoutMismatch(
            "state and operator set differ".into(),
        ));
    }
    Ok(())
}

/// One D-IKM round with explicit `α_{i,k}` and `ε_{i,k}`.
pub fn dikm_update(
    ops: &OperatorSet,
    state: &NetworkState,
    a: &DMatrix<f64>,
    alphas: &[f64],
    errors: &[Point],
) -> Result<NetworkState> {
    check_inputs(ops, state, alphas, errors)?;
    let xhat = mix(a, &state.x)?;
    let x = xhat
        .iter()
        .enumerate()
        .map(|(i, xh)| km_step(ops.op(i), xh, alphas[i], &errors[i]))
        .collect::<Result<Vec<_>>>()?;
    Ok(NetworkState {
        k: state.k + 1,
        x,
        xhat: Some(xhat),
    })
}

/// One D-IBKM round with explicit `α_{i,k}`, `ε_{i,k}` and activations `b_{i,k}`.
pub fn dibkm_update(
    ops: &OperatorSet,
    state: &NetworkState,
    a: &DMatrix<f64>,
    alphas: &[f64],
    errors: &[Point],
    activations: &[Vec<bool>],
) -> Result<NetworkState> {
    check_inputs(ops, state, alphas, errors)?;
    let layout = ops.layout();
    let m = layout.num_blocks();
    if activations.len() != ops.len() {
        return Err(Error::InvalidParameter(format!(
            "activations: expected {}, got {}",
            ops.len(),
            activations.len()
        )));
    }
    if let Some(b) = activations.iter().find(|b| b.len() != m) {
        return Err(Error::LayoutMismatch(format!(
            "{} activation flags for {m} blocks",
            b.len()
        )));
    }
    let xhat = mix(a, &state.x)?;
    let mut x = Vec::with_capacity(xhat.len());
    for (i, xh) in xhat.iter().enumerate() {
        let f = ops.op(i).eval(xh)?;
        let mut coords = xh.coords().to_vec();
        for (l, on) in activations[i].iter().enumerate() {
            if !*on {
                continue;
            }
            for j in layout.block_range(l) {
                coords[j] = relax(
                    xh.coords()[j],
                    f.coords()[j],
                    errors[i].coords()[j],
                    alphas[i],
                );
            }
        }
        x.push(Point::from_parts(coords, Arc::clone(layout)));
    }
    Ok(NetworkState {
        k: state.k + 1,
        x,
        xhat: Some(xhat),
    })
}

/// D-IKM round drawing `α_{i,k}` from the schedule and `ε_{i,k}` from the model.
pub fn dikm_step(
    ops: &OperatorSet,
    state: &NetworkState,
    a: &DMatrix<f64>,
    sched: &RelaxationSchedule,
    err: &mut ErrorModel,
) -> Result<NetworkState> {
    let k = state.k;
    let errors: Vec<Point> = (0..ops.len())
        .map(|i| err.draw(i, k, ops.layout()))
        .collect();
    dikm_update(ops, state, a, &sched.alphas(k), &errors)
}

/// D-IBKM round drawing `α_{i,k}`, `ε_{i,k}` and fresh activations.
pub fn dibkm_step(
    ops: &OperatorSet,
    state: &NetworkState,
    a: &DMatrix<f64>,
    sched: &RelaxationSchedule,
    err: &mut ErrorModel,
    blocks: &mut BlockScheme,
) -> Result<NetworkState> {
    let k = state.k;
    let errors: Vec<Point> = (0..ops.len())
        .map(|i| err.draw(i, k, ops.layout()))
        .collect();
    let acts: Vec<Vec<bool>> = (0..ops.len()).map(|i| blocks.draw(i)).collect();
    dibkm_update(ops, state, a, &sched.alphas(k), &errors, &acts)
}
