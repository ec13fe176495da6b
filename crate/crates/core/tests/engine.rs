use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use fixnet::diagnostics::StopReason;
use fixnet::engine::{run, run_repeats, EngineKind, ErrorSpec, RunOptions, ScheduleSpec};
use fixnet::graph::GraphSpec;
use fixnet::hilbert::{convex_combine, Point};
use fixnet::scenarios::{linear_equation_spec, preset, InitSpec, Scenario};

/// With identity operators the iteration is pure consensus, and `π_kᵀ x_k`
/// is conserved, so every agent converges to `π_0ᵀ x_0`.
#[test]
fn consensus_limit_is_absorption_average() {
    let sc = Scenario::from_spec(preset("consensus").unwrap()).unwrap();
    let tr = run(&sc, &RunOptions::new(EngineKind::Dikm, 3000, 0.0)).unwrap();
    let target = convex_combine(&tr.pis[0], &tr.states[0]).unwrap();
    for (k, x) in tr.states.iter().enumerate().step_by(97) {
        let avg = convex_combine(&tr.pis[k], x).unwrap();
        assert!(avg.dist(&target).unwrap() < 1e-9, "k = {k}");
    }
    for x in tr.states.last().unwrap() {
        assert!(x.dist(&target).unwrap() < 1e-8);
    }
}

/// Hand-rolled reference for two steps of the inexact distributed iteration.
#[test]
fn first_steps_match_manual_arithmetic() {
    let mut spec = preset("linear-3x3").unwrap();
    spec.errors = ErrorSpec::Custom {
        norms: vec![0.0, 0.0],
    };
    spec.schedule = ScheduleSpec::PerAgent {
        alphas: vec![0.2, 0.4, 0.5],
        floor: None,
    };
    let sc = Scenario::from_spec(spec).unwrap();
    let tr = run(&sc, &RunOptions::new(EngineKind::Dikm, 2, 0.0)).unwrap();
    let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]);
    let b = &a * DVector::from_vec(vec![1.0, -1.0, 2.0]);
    let alphas = [0.2, 0.4, 0.5];
    let mut x: Vec<DVector<f64>> = tr.states[0]
        .iter()
        .map(|p| DVector::from_column_slice(p.coords()))
        .collect();
    for k in 0..2 {
        let w = sc.graph.matrix(k);
        let xhat: Vec<DVector<f64>> = (0..3)
            .map(|i| (0..3).fold(DVector::zeros(3), |acc, j| acc + &x[j] * w[(i, j)]))
            .collect();
        x = (0..3)
            .map(|i| {
                let row = a.row(i).transpose();
                let sigma = row.norm_squared();
                let f = &xhat[i] - &row * ((row.dot(&xhat[i]) - b[i]) / sigma);
                &xhat[i] + (f - &xhat[i]) * alphas[i]
            })
            .collect();
        for i in 0..3 {
            let got = tr.states[k + 1][i].coords();
            for j in 0..3 {
                assert!((got[j] - x[i][j]).abs() < 1e-13, "k {k} agent {i}");
            }
        }
    }
}

#[test]
fn linear_system_solved_from_random_start() {
    let a = DMatrix::from_row_slice(
        4,
        3,
        &[2.0, -1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 3.0, -1.0, 1.0, 0.0, 2.0],
    );
    let xs = DVector::from_vec(vec![0.5, -1.5, 2.5]);
    let b = &a * &xs;
    let mut spec = linear_equation_spec(&a, &b, 4, GraphSpec::RotatingRing { agents: 4 }).unwrap();
    spec.errors = ErrorSpec::Power {
        scale: 0.2,
        exponent: 2.0,
    };
    let sc = Scenario::from_spec(spec).unwrap();
    let tr = run(&sc, &RunOptions::new(EngineKind::Dikm, 100_000, 1e-9)).unwrap();
    assert_eq!(tr.stop_reason, StopReason::Converged);
    let layout = Arc::clone(sc.layout());
    let star = Point::new(xs.iter().copied().collect(), layout).unwrap();
    for x in tr.states.last().unwrap() {
        assert!(x.dist(&star).unwrap() < 1e-6);
    }
}

#[test]
fn repeats_are_reproducible_and_distinct() {
    let sc = Scenario::from_spec(preset("feasibility-blocks").unwrap()).unwrap();
    let mut opts = RunOptions::new(EngineKind::Dibkm, 60, 0.0);
    opts.record_states = false;
    let a = run_repeats(&sc, &opts, 4).unwrap();
    let b = run_repeats(&sc, &opts, 4).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.records, y.records);
    }
    assert_ne!(a[0].records, a[1].records);
    assert_eq!(a[0].records, run(&sc, &opts).unwrap().records);
}

#[test]
fn block_engine_only_touches_active_blocks() {
    let mut spec = preset("feasibility-blocks").unwrap();
    spec.errors = ErrorSpec::Zero;
    let sc = Scenario::from_spec(spec).unwrap();
    let tr = run(&sc, &RunOptions::new(EngineKind::Dibkm, 30, 0.0)).unwrap();
    let mut partial = 0;
    for (k, step) in tr.steps.iter().enumerate() {
        let active = step.active_blocks.as_ref().unwrap();
        let xhat = fixnet::engine::mix(&sc.graph.matrix(k), &tr.states[k]).unwrap();
        for i in 0..sc.agents() {
            assert!(active[i] >= 1);
            let changed = (0..4)
                .filter(|j| tr.states[k + 1][i].coords()[*j] != xhat[i].coords()[*j])
                .count();
            assert!(changed <= active[i], "k {k} agent {i}");
            partial += usize::from(active[i] < 4);
        }
    }
    assert!(partial > 0);
}

#[test]
fn km_needs_one_agent_and_dibkm_needs_blocks() {
    let sc = Scenario::from_spec(preset("feasibility-2halfspace").unwrap()).unwrap();
    assert!(run(&sc, &RunOptions::new(EngineKind::Km, 10, 0.0)).is_err());
    assert!(run(&sc, &RunOptions::new(EngineKind::Dibkm, 10, 0.0)).is_err());
}

#[test]
fn uniform_box_init_follows_seed() {
    let mut spec = preset("consensus").unwrap();
    let a = Scenario::from_spec(spec.clone()).unwrap();
    spec.seed += 1;
    let b = Scenario::from_spec(spec.clone()).unwrap();
    assert_ne!(a.initial, b.initial);
    spec.init = InitSpec::Points {
        points: a.initial.iter().map(|p| p.coords().to_vec()).collect(),
    };
    let c = Scenario::from_spec(spec).unwrap();
    assert_eq!(a.initial, c.initial);
}
