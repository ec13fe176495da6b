use nalgebra::{DMatrix, DVector};

use super::{BlockSpec, FixedSetSpec, InitSpec, RegularitySpec, Scenario, ScenarioSpec};
use crate::engine::{ErrorSpec, ScheduleSpec};
use crate::error::{Error, Result};
use crate::graph::GraphSpec;
use crate::operators::{OpSpec, SetSpec};

pub const PRESET_NAMES: [&str; 6] = [
    "feasibility-2halfspace",
    "feasibility-blocks",
    "feasibility-ball-box",
    "linear-3x3",
    "example1",
    "consensus",
];

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn halfspace(normal: &[f64], offset: f64) -> SetSpec {
    SetSpec::Halfspace {
        normal: normal.to_vec(),
        offset,
    }
}

fn base(
    name: &str,
    dim: usize,
    operators: Vec<OpSpec>,
    graph: GraphSpec,
    init: InitSpec,
) -> ScenarioSpec {
    ScenarioSpec {
        name: name.into(),
        seed: 1,
        dim,
        layout: None,
        operators,
        fixed_set: FixedSetSpec::Auto,
        graph,
        schedule: ScheduleSpec::Constant {
            alpha: 0.5,
            floor: None,
        },
        errors: ErrorSpec::Zero,
        blocks: None,
        init,
        regularity: None,
        waive_nonexpansive: false,
        interior_point: None,
        expect: Vec::new(),
    }
}

/// Splits the rows of `A x = b` into `n` contiguous blocks, one per agent.
pub fn linear_equation_spec(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    n: usize,
    graph: GraphSpec,
) -> Result<ScenarioSpec> {
    let m = a.nrows();
    if b.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: b.len(),
        });
    }
    if n == 0 || n > m {
        return Err(Error::Validation(format!(
            "cannot split {m} rows into {n} nonempty blocks"
        )));
    }
    let mut ops = Vec::with_capacity(n);
    let mut at = 0;
    for i in 0..n {
        let size = m / n + usize::from(i < m % n);
        ops.push(OpSpec::LinearEquation {
            rows: rows(&a.rows(at, size).into_owned()),
            rhs: b.rows(at, size).iter().copied().collect(),
            sigma: None,
        });
        at += size;
    }
    let dim = a.ncols();
    let mut spec = base(
        "linear-equation",
        dim,
        ops,
        graph,
        InitSpec::UniformBox { lo: -5.0, hi: 5.0 },
    );
    spec.fixed_set = FixedSetSpec::Sets {
        sets: vec![SetSpec::Affine {
            matrix: rows(a),
            rhs: b.iter().copied().collect(),
        }],
    };
    spec.regularity = Some(RegularitySpec {
        radius: 10.0,
        samples: 2000,
        seed: 7,
    });
    Ok(spec)
}

/// Agent `i` holds `x ↦ x − A_iᵀ(A_i x − b_i)/σ_i` for its row block.
pub fn build_linear_equation_scenario(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    n: usize,
    graph: GraphSpec,
) -> Result<Scenario> {
    Scenario::from_spec(linear_equation_spec(a, b, n, graph)?)
}

/// Agent `i` projects onto `S_i`; `X*` is the intersection.
pub fn feasibility_spec(sets: Vec<SetSpec>, n: usize, graph: GraphSpec) -> Result<ScenarioSpec> {
    if sets.len() != n {
        return Err(Error::Validation(format!(
            "{} sets for {n} agents",
            sets.len()
        )));
    }
    let dim = match &sets[0] {
        SetSpec::Box { lo, .. } => lo.len(),
        SetSpec::Ball { center, .. } => center.len(),
        SetSpec::Halfspace { normal, .. } => normal.len(),
        SetSpec::Affine { matrix, .. } => matrix.first().map_or(0, Vec::len),
    };
    let ops = sets
        .into_iter()
        .map(|set| OpSpec::Project { set })
        .collect();
    let mut spec = base(
        "feasibility",
        dim,
        ops,
        graph,
        InitSpec::UniformBox { lo: -5.0, hi: 5.0 },
    );
    spec.regularity = Some(RegularitySpec {
        radius: 10.0,
        samples: 2000,
        seed: 7,
    });
    Ok(spec)
}

pub fn build_feasibility_scenario(
    sets: Vec<SetSpec>,
    n: usize,
    graph: GraphSpec,
) -> Result<Scenario> {
    Scenario::from_spec(feasibility_spec(sets, n, graph)?)
}

fn example1_spec() -> ScenarioSpec {
    let mut spec = base(
        "example1",
        1,
        vec![
            OpSpec::Square,
            OpSpec::Project {
                set: SetSpec::Box {
                    lo: vec![0.0],
                    hi: vec![0.5],
                },
            },
        ],
        GraphSpec::Complete { agents: 2 },
        InitSpec::Points {
            points: vec![vec![0.9], vec![0.9]],
        },
    );
    spec.fixed_set = FixedSetSpec::Sets {
        sets: vec![SetSpec::Box {
            lo: vec![0.0],
            hi: vec![0.0],
        }],
    };
    spec.waive_nonexpansive = true;
    spec.regularity = Some(RegularitySpec {
        radius: 0.999,
        samples: 100_000,
        seed: 3,
    });
    spec.expect = vec!["power-regular".into()];
    spec
}

/// `T₁(x) = x²` and `T₂ = P_{[0, 1/2]}` on `[0, 1)` with `X* = {0}`.
pub fn build_example1_scenario() -> Result<Scenario> {
    Scenario::from_spec(example1_spec())
}

/// The named preset's spec.
pub fn preset(name: &str) -> Result<ScenarioSpec> {
    let ring = |agents| GraphSpec::RotatingRing { agents };
    Ok(match name {
        "feasibility-2halfspace" => {
            let mut s = feasibility_spec(
                vec![halfspace(&[1.0, 1.0], 1.0), halfspace(&[1.0, -1.0], 1.0)],
                2,
                ring(2),
            )?;
            s.name = name.into();
            s.errors = ErrorSpec::Geometric {
                scale: 0.1,
                ratio: 0.9,
            };
            s.init = InitSpec::Points {
                points: vec![vec![4.0, 3.0], vec![5.0, -2.0]],
            };
            s.expect = vec!["convergence".into(), "distance-rate".into()];
            s
        }
        "feasibility-blocks" => {
            let mut s = feasibility_spec(
                vec![
                    halfspace(&[1.0, 1.0, 1.0, 1.0], 1.0),
                    halfspace(&[1.0, -1.0, 1.0, -1.0], 1.0),
                ],
                2,
                ring(2),
            )?;
            s.name = name.into();
            s.layout = Some(vec![1; 4]);
            s.blocks = Some(BlockSpec {
                probs: vec![0.25, 0.5, 0.75, 1.0],
            });
            s.errors = ErrorSpec::Geometric {
                scale: 0.05,
                ratio: 0.9,
            };
            s.init = InitSpec::Points {
                points: vec![vec![4.0, 3.0, 2.0, 1.0], vec![5.0, -2.0, 1.0, 0.0]],
            };
            s.expect = vec!["block-convergence".into(), "block-rate".into()];
            s
        }
        "feasibility-ball-box" => {
            let mut s = feasibility_spec(
                vec![
                    SetSpec::Ball {
                        center: vec![0.0; 3],
                        radius: 1.5,
                    },
                    SetSpec::Box {
                        lo: vec![0.0; 3],
                        hi: vec![2.0; 3],
                    },
                ],
                2,
                GraphSpec::Complete { agents: 2 },
            )?;
            s.name = name.into();
            s.init = InitSpec::Points {
                points: vec![vec![3.0, 3.0, 3.0], vec![-2.0, 1.0, 0.5]],
            };
            s.expect = vec!["convergence".into()];
            s
        }
        "linear-3x3" => {
            let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]);
            let b = &a * DVector::from_column_slice(&[1.0, -1.0, 2.0]);
            let mut s = linear_equation_spec(&a, &b, 3, ring(3))?;
            s.name = name.into();
            s.errors = ErrorSpec::Geometric {
                scale: 0.1,
                ratio: 0.9,
            };
            s.init = InitSpec::Points {
                points: vec![
                    vec![5.0, 5.0, 5.0],
                    vec![-3.0, 2.0, 0.0],
                    vec![0.0, 0.0, -4.0],
                ],
            };
            s.expect = vec!["convergence".into()];
            s
        }
        "example1" => example1_spec(),
        "consensus" => {
            let mut s = base(
                name,
                2,
                vec![OpSpec::Identity; 4],
                GraphSpec::RandomPool {
                    agents: 4,
                    templates: None,
                    seed: 5,
                },
                InitSpec::UniformBox {
                    lo: -10.0,
                    hi: 10.0,
                },
            );
            s.fixed_set = FixedSetSpec::Absent;
            s
        }
        other => {
            return Err(Error::Config(format!(
                "unknown preset {other:?}; known presets: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    })
}
