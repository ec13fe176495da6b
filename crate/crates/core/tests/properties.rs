use std::sync::Arc;

use proptest::prelude::*;

use fixnet::diagnostics::{fit_rate, running_min};
use fixnet::engine::{run, EngineKind, ErrorSpec, RunOptions};
use fixnet::graph::{
    absorption_sequence, contraction_horizon, stationarity_defect, GraphSequence, GraphSpec,
};
use fixnet::hilbert::{convex_combine, inner, weighted_norm_sq, BlockLayout, Point, WeightedNorm};
use fixnet::lemmas::{
    check_convex_identity, check_fixed_point_inequality, check_residual_recursion, lemma_catalog,
    LemmaReport,
};
use fixnet::scenarios::{preset, Scenario};
use fixnet::seeds;
use rand::Rng;

fn vecs(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, n)
}

fn report() -> LemmaReport {
    LemmaReport::new("property")
}

proptest! {
    #[test]
    fn convex_identity_exact(n in 1usize..6, seed in any::<u64>(), r in -3.0f64..3.0) {
        let mut rng = seeds::from_seed(seed);
        let x = Point::from_vec((0..n).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
        let y = x.with_coords((0..n).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
        let mut rep = report();
        check_convex_identity(&x, &y, r, &mut rep).unwrap();
        prop_assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn weighted_norm_between_plain_and_scaled(v in vecs(4), p in prop::collection::vec(0.05f64..=1.0, 4)) {
        let y = Point::new(v, Arc::new(BlockLayout::scalar_blocks(4).unwrap())).unwrap();
        let w = WeightedNorm::new(p).unwrap();
        let n2 = y.norm_sq();
        let wn = weighted_norm_sq(&y, &w).unwrap();
        prop_assert!(wn >= n2 * (1.0 - 1e-12));
        prop_assert!(wn <= n2 / w.p_min() * (1.0 + 1e-12));
        prop_assert!((w.inner(&y, &y).unwrap() - wn).abs() <= 1e-12 * (1.0 + wn));
    }

    #[test]
    fn convex_combination_is_nonexpansive(
        raw in prop::collection::vec(0.0f64..1.0, 1..5),
        seed in any::<u64>(),
    ) {
        prop_assume!(raw.iter().sum::<f64>() > 1e-3);
        let s: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / s).collect();
        let total: f64 = w.iter().sum();
        prop_assume!((total - 1.0).abs() < 1e-13);
        let mut rng = seeds::from_seed(seed);
        let mut pt = || Point::from_vec((0..3).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
        let xs: Vec<Point> = (0..w.len()).map(|_| pt()).collect();
        let ys: Vec<Point> = (0..w.len()).map(|_| pt()).collect();
        let lhs = convex_combine(&w, &xs).unwrap().dist(&convex_combine(&w, &ys).unwrap()).unwrap();
        let rhs = xs.iter().zip(&ys).map(|(x, y)| x.dist(y).unwrap()).fold(0.0, f64::max);
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn fixed_point_inequality_on_catalog(seed in any::<u64>()) {
        let mut rng = seeds::from_seed(seed);
        for (op, dim) in lemma_catalog().unwrap() {
            let layout = Arc::new(BlockLayout::single(dim).unwrap());
            let y = Point::new((0..dim).map(|_| rng.random_range(-20.0..20.0)).collect(), Arc::clone(&layout)).unwrap();
            let w = Point::new((0..dim).map(|_| rng.random_range(-20.0..20.0)).collect(), layout).unwrap();
            let z = op.project_fixed(&w).unwrap();
            let mut rep = report();
            check_fixed_point_inequality(&op, &y, &z, &mut rep).unwrap();
            prop_assert!(rep.passed(), "{} {rep:?}", op.name());
        }
    }

    #[test]
    fn running_min_is_idempotent_and_below(series in prop::collection::vec(0.0f64..100.0, 1..200)) {
        let m = running_min(&series);
        prop_assert_eq!(&running_min(&m), &m);
        for k in 0..series.len() {
            prop_assert!(m[k] <= series[k]);
            if k > 0 {
                prop_assert!(m[k] <= m[k - 1]);
            }
        }
    }

    #[test]
    fn fit_rate_recovers_power_laws(c in 1e-3f64..1e3, e in 0.1f64..3.0, len in 100usize..2000) {
        let series: Vec<f64> = (0..len).map(|k| c * (k.max(1) as f64).powf(-e)).collect();
        let cert = fit_rate(&series, 0.5, e, 0.1).unwrap();
        prop_assert!((cert.exponent - e).abs() < 1e-8, "{}", cert.exponent);
        prop_assert!((cert.constant / c - 1.0).abs() < 1e-6);
        prop_assert!(cert.passed);
        let strict = fit_rate(&series, 0.5, e + 0.2, 0.1).unwrap();
        prop_assert!(!strict.passed);
    }

    #[test]
    fn random_pool_absorption_is_stationary(agents in 2usize..6, seed in any::<u64>()) {
        let g = GraphSequence::from_spec(&GraphSpec::RandomPool { agents, templates: None, seed }).unwrap();
        let h = contraction_horizon(&g, 60, 1 << 17).unwrap();
        let pis = absorption_sequence(&g, 60, h).unwrap();
        prop_assert!(stationarity_defect(&g, &pis) < 1e-8);
        for p in &pis {
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

fn catalog_pairs(pairs: usize, seed: u64) -> f64 {
    let mut rng = seeds::from_seed(seed);
    let mut worst = 0.0f64;
    for (op, dim) in lemma_catalog().unwrap() {
        let layout = Arc::new(BlockLayout::single(dim).unwrap());
        for _ in 0..pairs {
            let mut pt = || {
                Point::new(
                    (0..dim).map(|_| rng.random_range(-10.0..10.0)).collect(),
                    Arc::clone(&layout),
                )
                .unwrap()
            };
            let (x, y) = (pt(), pt());
            let d = x.dist(&y).unwrap();
            if d > 0.0 {
                worst = worst.max(op.eval(&x).unwrap().dist(&op.eval(&y).unwrap()).unwrap() / d);
            }
        }
    }
    worst
}

#[test]
fn catalog_is_nonexpansive_on_many_pairs() {
    let worst = catalog_pairs(10_000, 5);
    assert!(worst <= 1.0 + 1e-12, "{worst}");
}

#[test]
fn stationary_at_common_fixed_points() {
    for name in [
        "feasibility-2halfspace",
        "linear-3x3",
        "feasibility-blocks",
        "feasibility-ball-box",
    ] {
        let mut spec = preset(name).unwrap();
        spec.errors = ErrorSpec::Zero;
        let sc = Scenario::from_spec(spec.clone()).unwrap();
        let far = Point::new(vec![7.0; spec.dim], Arc::clone(sc.layout())).unwrap();
        let q = sc.ops.project_common(&far).unwrap();
        spec.init = fixnet::scenarios::InitSpec::Points {
            points: vec![q.coords().to_vec(); sc.agents()],
        };
        let sc = Scenario::from_spec(spec).unwrap();
        let engine = if sc.blocks.is_some() {
            EngineKind::Dibkm
        } else {
            EngineKind::Dikm
        };
        let tr = run(&sc, &RunOptions::new(engine, 50, 0.0)).unwrap();
        for x in tr.states.iter().flatten() {
            assert!(x.dist(&q).unwrap() < 1e-9, "{name}");
        }
    }
}

/// Error-free: both `Σ_i π_{i,k}‖x_{i,k} − z‖²` for fixed `z ∈ X*` and
/// `Σ_i π_{i,k} d²(x_{i,k}, X*)` are nonincreasing.
#[test]
fn fejer_surrogates_nonincreasing() {
    for name in [
        "feasibility-2halfspace",
        "linear-3x3",
        "feasibility-ball-box",
    ] {
        let mut spec = preset(name).unwrap();
        spec.errors = ErrorSpec::Zero;
        let sc = Scenario::from_spec(spec.clone()).unwrap();
        let tr = run(&sc, &RunOptions::new(EngineKind::Dikm, 400, 0.0)).unwrap();
        let z = sc
            .ops
            .project_common(&Point::new(vec![0.0; spec.dim], Arc::clone(sc.layout())).unwrap())
            .unwrap();
        let v: Vec<f64> = tr
            .states
            .iter()
            .zip(&tr.pis)
            .map(|(x, pi)| {
                x.iter()
                    .zip(pi)
                    .map(|(p, w)| w * p.sub(&z).unwrap().norm_sq())
                    .sum()
            })
            .collect();
        let d2 = tr.d2_series().unwrap();
        for k in 1..v.len() {
            assert!(v[k] <= v[k - 1] * (1.0 + 1e-12) + 1e-14, "{name} V at {k}");
            assert!(
                d2[k] <= d2[k - 1] * (1.0 + 1e-12) + 1e-14,
                "{name} d2 at {k}"
            );
        }
    }
}

/// The recorded squared distance recomputed from stored states.
#[test]
fn d2_matches_recomputation() {
    for name in ["feasibility-2halfspace", "linear-3x3", "feasibility-blocks"] {
        let sc = Scenario::from_spec(preset(name).unwrap()).unwrap();
        let engine = if sc.blocks.is_some() {
            EngineKind::Dibkm
        } else {
            EngineKind::Dikm
        };
        let tr = run(&sc, &RunOptions::new(engine, 300, 0.0)).unwrap();
        for (k, x) in tr.states.iter().enumerate() {
            let pi = &tr.pis[k];
            let d2: f64 = x
                .iter()
                .zip(pi)
                .map(|(p, w)| w * p.dist(&sc.ops.project_common(p).unwrap()).unwrap().powi(2))
                .sum();
            let rec = tr.records[k].d2.unwrap();
            assert!((rec - d2).abs() <= 1e-12 * (1.0 + d2), "{name} k = {k}");
            if let (Some(w), Some(wd2)) = (&sc.blocks, tr.records[k].weighted_d2) {
                let proj: Vec<Point> = x
                    .iter()
                    .map(|p| sc.ops.project_common(p).unwrap())
                    .collect();
                let q = convex_combine(pi, &proj).unwrap();
                let direct: f64 = x
                    .iter()
                    .zip(pi)
                    .map(|(p, c)| c * w.inner(&p.sub(&q).unwrap(), &p.sub(&q).unwrap()).unwrap())
                    .sum();
                assert!(
                    (wd2 - direct).abs() <= 1e-12 * (1.0 + direct),
                    "{name} k = {k}"
                );
            }
        }
    }
}

#[test]
fn residual_recursion_over_many_seeds() {
    let mut rep = report();
    for seed in 0..20u64 {
        for name in ["feasibility-2halfspace", "linear-3x3"] {
            let mut spec = preset(name).unwrap();
            spec.seed = seed;
            spec.errors = ErrorSpec::Power {
                scale: 0.5,
                exponent: 1.5,
            };
            let sc = Scenario::from_spec(spec).unwrap();
            let tr = run(&sc, &RunOptions::new(EngineKind::Dikm, 200, 0.0)).unwrap();
            check_residual_recursion(&tr, &mut rep);
        }
    }
    assert!(rep.passed(), "{rep:?}");
    assert_eq!(rep.samples, 20 * (200 * 2 + 200 * 3));
}

#[test]
fn inner_product_symmetry_and_norm() {
    let x = Point::from_vec(vec![1.0, -2.0, 3.0]).unwrap();
    let y = x.with_coords(vec![0.5, 4.0, -1.0]).unwrap();
    assert_eq!(inner(&x, &y).unwrap(), inner(&y, &x).unwrap());
    assert_eq!(inner(&x, &x).unwrap(), x.norm_sq());
}
