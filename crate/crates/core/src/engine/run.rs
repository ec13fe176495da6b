use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{
    dibkm_update, dikm_update, km_step, BlockScheme, EngineKind, ErrorModel, NetworkState,
};
use crate::diagnostics::{record_state, RunTrace, StepRecord, StopReason};
use crate::error::{Error, Result};
use crate::graph::{absorption_sequence, contraction_horizon};
use crate::hilbert::Point;
use crate::scenarios::{Scenario, ScenarioSpec};
use crate::seeds;

/// Any coordinate above this magnitude aborts the run.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Longest backward product tried when locating absorption vectors.
const MAX_HORIZON: usize = 1 << 17;

/// How to execute a scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOptions {
    pub engine: EngineKind,
    pub max_iters: usize,
    /// Stop once every residual and consensus error is below this value.
    pub stop_tolerance: f64,
    /// Repetition index; repetition `r > 0` reseeds every random stream.
    pub repetition: usize,
    /// Keep every `x_{·,k}` in the trace.
    pub record_states: bool,
}

impl RunOptions {
    pub fn new(engine: EngineKind, max_iters: usize, stop_tolerance: f64) -> Self {
        Self {
            engine,
            max_iters,
            stop_tolerance,
            repetition: 0,
            record_states: true,
        }
    }
}

fn run_seed(master: u64, repetition: usize) -> u64 {
    if repetition == 0 {
        master
    } else {
        seeds::derive_seed(master, &format!("repeat/{repetition}"))
    }
}

fn fingerprint(spec: &ScenarioSpec, opts: &RunOptions) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(spec)?);
    h.update(serde_json::to_vec(opts)?);
    Ok(hex::encode(h.finalize()))
}

fn guard(k: usize, x: &[Point]) -> Result<()> {
    let bad = x.iter().any(|p| {
        p.coords()
            .iter()
            .any(|c| !c.is_finite() || c.abs() > DIVERGENCE_LIMIT)
    });
    if bad {
        Err(Error::Divergence {
            k,
            limit: DIVERGENCE_LIMIT,
        })
    } else {
        Ok(())
    }
}

/// Iterates the configured engine from the scenario's initial points,
/// recording diagnostics at every step.
pub fn run(sc: &Scenario, opts: &RunOptions) -> Result<RunTrace> {
    if !sc.is_validated() {
        return Err(Error::Validation(format!(
            "scenario {} has not passed validation",
            sc.name()
        )));
    }
    let n = sc.agents();
    match opts.engine {
        EngineKind::Km if n != 1 => {
            return Err(Error::Validation(format!(
                "engine km needs exactly one agent, scenario has {n}"
            )))
        }
        EngineKind::Dibkm if sc.blocks.is_none() => {
            return Err(Error::Validation(
                "engine dibkm needs a block scheme".into(),
            ))
        }
        _ => {}
    }
    if !(opts.stop_tolerance >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "stop tolerance {} < 0",
            opts.stop_tolerance
        )));
    }
    let seed = run_seed(sc.seed(), opts.repetition);
    let layout = sc.layout();
    let mut errors = ErrorModel::new(sc.spec.errors.clone(), seed, n)?;
    let mut blocks = match (&sc.blocks, opts.engine) {
        (Some(w), EngineKind::Dibkm) => Some(BlockScheme::new(w.probs().to_vec(), seed, n)?),
        _ => None,
    };
    let weights = blocks.as_ref().map(|b| b.norm().clone());

    let pis = if n == 1 {
        vec![vec![1.0]; opts.max_iters + 1]
    } else {
        let h = contraction_horizon(&sc.graph, opts.max_iters, MAX_HORIZON)?;
        absorption_sequence(&sc.graph, opts.max_iters, h)?
    };

    let mut state = NetworkState::new(sc.initial.clone())?;
    let mut records = Vec::new();
    let mut steps = Vec::new();
    let mut states = Vec::new();
    let stop_reason = loop {
        let k = state.k;
        let rec = record_state(&sc.ops, k, &state.x, &pis[k], weights.as_ref())?;
        let converged =
            rec.max_residual < opts.stop_tolerance && rec.max_consensus < opts.stop_tolerance;
        records.push(rec);
        if opts.record_states {
            states.push(state.x.clone());
        }
        if converged {
            break StopReason::Converged;
        }
        if k >= opts.max_iters {
            break StopReason::Budget;
        }

        let alphas = sc.schedule.alphas(k);
        let eps: Vec<Point> = (0..n).map(|i| errors.draw(i, k, layout)).collect();
        let (next, active) = match opts.engine {
            EngineKind::Km => {
                let x = km_step(sc.ops.op(0), &state.x[0], alphas[0], &eps[0])?;
                let next = NetworkState {
                    k: k + 1,
                    x: vec![x],
                    xhat: Some(state.x.clone()),
                };
                (next, None)
            }
            EngineKind::Dikm => (
                dikm_update(&sc.ops, &state, &sc.graph.matrix(k), &alphas, &eps)?,
                None,
            ),
            EngineKind::Dibkm => {
                let b = blocks.as_mut().expect("checked above");
                let acts: Vec<Vec<bool>> = (0..n).map(|i| b.draw(i)).collect();
                let active = acts
                    .iter()
                    .map(|a| a.iter().filter(|v| **v).count())
                    .collect();
                (
                    dibkm_update(&sc.ops, &state, &sc.graph.matrix(k), &alphas, &eps, &acts)?,
                    Some(active),
                )
            }
        };
        let xhat = next.xhat.as_ref().expect("a step records mixed points");
        let mixed_residuals = xhat
            .iter()
            .zip(sc.ops.ops())
            .map(|(x, op)| op.eval(x)?.dist(x))
            .collect::<Result<Vec<_>>>()?;
        let last = records.last_mut().expect("pushed above");
        last.error_norms = eps.iter().map(Point::norm).collect();
        steps.push(StepRecord {
            alphas,
            mixed_residuals,
            active_blocks: active,
        });
        guard(k + 1, &next.x)?;
        state = next;
    };

    let len = records.len();
    Ok(RunTrace {
        scenario: sc.name().to_string(),
        engine: opts.engine,
        seed,
        agents: n,
        records,
        steps,
        states,
        pis: pis[..len].to_vec(),
        stop_reason,
        fingerprint: fingerprint(&sc.spec, opts)?,
    })
}

/// Runs repetitions `0..repeats` in parallel; results are in repetition order.
pub fn run_repeats(sc: &Scenario, opts: &RunOptions, repeats: usize) -> Result<Vec<RunTrace>> {
    (0..repeats)
        .into_par_iter()
        .map(|r| {
            let o = RunOptions {
                repetition: r,
                ..opts.clone()
            };
            run(sc, &o)
        })
        .collect()
}
