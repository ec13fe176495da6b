//! Reproducible experiment descriptions: operators, graph, schedule, error
//! model, optional block scheme and initial points, all seeded explicitly.

mod presets;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{ErrorSpec, RelaxationSchedule, ScheduleSpec};
use crate::error::{Error, Result};
use crate::graph::{check_assumption1, Assumption1Report, GraphSequence, GraphSpec};
use crate::hilbert::{BlockLayout, Point, WeightedNorm};
use crate::operators::{
    estimate_regularity, sample_points, AffineSet, ConvexSet, FixedSetOracle, NonexpansiveOp,
    OpSpec, OperatorSet, RegularityEstimate, SetSpec,
};
use crate::seeds;

pub use presets::{
    build_example1_scenario, build_feasibility_scenario, build_linear_equation_scenario,
    feasibility_spec, linear_equation_spec, preset, PRESET_NAMES,
};

/// Where the projector onto the common fixed set comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum FixedSetSpec {
    /// Intersect the operators' own fixed sets when each has a closed form.
    #[default]
    Auto,
    /// No projector; distance diagnostics are skipped.
    Absent,
    /// Explicit list of sets whose intersection is `X*`.
    Sets { sets: Vec<SetSpec> },
}

/// Initial points `x_{i,0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    Points {
        points: Vec<Vec<f64>>,
    },
    /// Independent uniform coordinates in `[lo, hi)` from the `init` stream.
    UniformBox {
        lo: f64,
        hi: f64,
    },
}

/// Activation probabilities `p_l`, shared by all agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub probs: Vec<f64>,
}

/// Sampling settings for regularity estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularitySpec {
    pub radius: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Serializable scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub seed: u64,
    pub dim: usize,
    /// Block sizes; defaults to a single block.
    #[serde(default)]
    pub layout: Option<Vec<usize>>,
    pub operators: Vec<OpSpec>,
    #[serde(default)]
    pub fixed_set: FixedSetSpec,
    pub graph: GraphSpec,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub errors: ErrorSpec,
    #[serde(default)]
    pub blocks: Option<BlockSpec>,
    pub init: InitSpec,
    #[serde(default)]
    pub regularity: Option<RegularitySpec>,
    /// Accept operators that are known not to be nonexpansive.
    #[serde(default)]
    pub waive_nonexpansive: bool,
    /// A candidate point for the interior criterion of feasibility problems.
    #[serde(default)]
    pub interior_point: Option<Vec<f64>>,
    /// Results whose hypotheses the scenario is designed to meet.
    #[serde(default)]
    pub expect: Vec<String>,
}

/// Result of the pre-run checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub assumption1: Assumption1Report,
    /// Operators with a sampled Lipschitz ratio above one, and the ratio.
    pub expansive: Vec<(usize, f64)>,
    pub waived: Vec<String>,
    /// Largest `‖F_i(q) − q‖` over sampled `q = P_{X*}(x)`.
    pub projector_defect: Option<f64>,
    pub domain_ok: bool,
    /// Interior criterion for intersections of sets; `None` when not a
    /// feasibility problem.
    pub interior: Option<bool>,
    pub regularity: Option<RegularityEstimate>,
    pub errors: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Sampled pairs per operator in the nonexpansiveness check.
pub const NONEXPANSIVE_PAIRS: usize = 200;

/// Tolerance for `F_i(P_{X*}(x)) = P_{X*}(x)`.
pub const PROJECTOR_TOLERANCE: f64 = 1e-7;

/// Starts sampled when checking that restricted domains are invariant.
pub const DOMAIN_STARTS: usize = 1000;

/// A built scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub ops: OperatorSet,
    pub graph: GraphSequence,
    pub schedule: RelaxationSchedule,
    pub blocks: Option<WeightedNorm>,
    pub initial: Vec<Point>,
    validation: Option<ValidationReport>,
}

fn merged_fixed_set(ops: &[NonexpansiveOp], dim: usize) -> Result<Option<FixedSetOracle>> {
    let mut sets = Vec::new();
    let mut rows: Vec<DMatrix<f64>> = Vec::new();
    let mut rhs: Vec<DVector<f64>> = Vec::new();
    for op in ops {
        match op.fixed_set(dim) {
            None => {
                if matches!(op, NonexpansiveOp::Identity) {
                    continue;
                }
                return Ok(None);
            }
            Some(ConvexSet::Affine(a)) => {
                rows.push(a.matrix().clone());
                rhs.push(a.rhs().clone());
            }
            Some(s) => sets.push(s),
        }
    }
    if !rows.is_empty() {
        // stack every affine constraint into one system
        let m: usize = rows.iter().map(|r| r.nrows()).sum();
        let mut a = DMatrix::zeros(m, dim);
        let mut b = DVector::zeros(m);
        let mut at = 0;
        for (r, v) in rows.iter().zip(&rhs) {
            a.rows_mut(at, r.nrows()).copy_from(r);
            b.rows_mut(at, r.nrows()).copy_from(v);
            at += r.nrows();
        }
        sets.push(ConvexSet::Affine(AffineSet::new(a, b)?));
    }
    if sets.is_empty() {
        return Ok(None);
    }
    Ok(Some(FixedSetOracle::intersection(sets)?))
}

impl Scenario {
    /// Builds the runtime objects without running the checks.
    pub fn build(spec: ScenarioSpec) -> Result<Self> {
        let layout = Arc::new(match &spec.layout {
            Some(sizes) => BlockLayout::new(sizes.clone())?,
            None => BlockLayout::single(spec.dim)?,
        });
        if layout.dim() != spec.dim {
            return Err(Error::Validation(format!(
                "layout covers {} coordinates, dim is {}",
                layout.dim(),
                spec.dim
            )));
        }
        let ops = spec
            .operators
            .iter()
            .map(NonexpansiveOp::from_spec)
            .collect::<Result<Vec<_>>>()?;
        let n = ops.len();
        let common = match &spec.fixed_set {
            FixedSetSpec::Absent => None,
            FixedSetSpec::Auto => merged_fixed_set(&ops, spec.dim)?,
            FixedSetSpec::Sets { sets } => Some(FixedSetOracle::intersection(
                sets.iter()
                    .map(ConvexSet::from_spec)
                    .collect::<Result<Vec<_>>>()?,
            )?),
        };
        let ops = OperatorSet::new(ops, common, Arc::clone(&layout))?;
        let graph = GraphSequence::from_spec(&spec.graph)?;
        if graph.agents() != n {
            return Err(Error::Validation(format!(
                "graph has {} agents but {n} operators are given",
                graph.agents()
            )));
        }
        let schedule = RelaxationSchedule::new(spec.schedule.clone(), n)?;
        spec.errors.validate()?;
        let blocks = match &spec.blocks {
            None => None,
            Some(b) => {
                if b.probs.len() != layout.num_blocks() {
                    return Err(Error::Validation(format!(
                        "{} block probabilities for {} blocks",
                        b.probs.len(),
                        layout.num_blocks()
                    )));
                }
                Some(
                    WeightedNorm::new(b.probs.clone())
                        .map_err(|e| Error::Validation(e.to_string()))?,
                )
            }
        };
        let initial = match &spec.init {
            InitSpec::Points { points } => {
                if points.len() != n {
                    return Err(Error::Validation(format!(
                        "{} initial points for {n} agents",
                        points.len()
                    )));
                }
                points
                    .iter()
                    .map(|p| Point::new(p.clone(), Arc::clone(&layout)))
                    .collect::<Result<Vec<_>>>()?
            }
            InitSpec::UniformBox { lo, hi } => {
                if !(lo < hi) {
                    return Err(Error::Validation(format!("empty initial box [{lo}, {hi})")));
                }
                let mut rng = seeds::stream(spec.seed, "init");
                (0..n)
                    .map(|_| {
                        let c = (0..spec.dim).map(|_| rng.random_range(*lo..*hi)).collect();
                        Point::new(c, Arc::clone(&layout))
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        Ok(Self {
            spec,
            ops,
            graph,
            schedule,
            blocks,
            initial,
            validation: None,
        })
    }

    /// Builds and validates; fails when any check fails.
    pub fn from_spec(spec: ScenarioSpec) -> Result<Self> {
        let mut s = Self::build(spec)?;
        let report = s.validate(false)?;
        if !report.passed() {
            return Err(Error::Validation(report.errors.join("; ")));
        }
        Ok(s)
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn seed(&self) -> u64 {
        self.spec.seed
    }

    pub fn agents(&self) -> usize {
        self.ops.len()
    }

    pub fn layout(&self) -> &Arc<BlockLayout> {
        self.ops.layout()
    }

    pub fn validation(&self) -> Option<&ValidationReport> {
        self.validation.as_ref()
    }

    pub fn is_validated(&self) -> bool {
        self.validation
            .as_ref()
            .is_some_and(ValidationReport::passed)
    }

    /// Runs every pre-run check and stores the report. Regularity constants
    /// are estimated only when `with_regularity` is set and the scenario
    /// declares sampling settings.
    pub fn validate(&mut self, with_regularity: bool) -> Result<ValidationReport> {
        let mut errors = Vec::new();
        let horizon = (4 * self.graph.window()).max(64);
        let assumption1 = check_assumption1(&self.graph, horizon);
        if let Some(v) = &assumption1.violation {
            errors.push(format!(
                "connectivity/weights: {} at k = {}: {}",
                v.rule, v.k, v.detail
            ));
        }

        let radius = self.spec.regularity.as_ref().map_or(10.0, |r| r.radius);
        let mut expansive = Vec::new();
        let mut waived = Vec::new();
        for (i, op) in self.ops.ops().iter().enumerate() {
            if !op.is_nonexpansive() {
                if self.spec.waive_nonexpansive {
                    waived.push(format!("operator {i} ({}) is not nonexpansive", op.name()));
                    continue;
                }
                errors.push(format!("operator {i} ({}) is not nonexpansive", op.name()));
                continue;
            }
            let ratio = lipschitz_sample(op, self.layout(), radius, self.seed(), i)?;
            if ratio > 1.0 + 1e-9 {
                expansive.push((i, ratio));
                errors.push(format!(
                    "operator {i} ({}) expands a sampled pair by {ratio}",
                    op.name()
                ));
            }
        }

        let projector_defect = match self.ops.common() {
            None => None,
            Some(_) => {
                let pts = sample_points(
                    self.layout(),
                    radius,
                    50,
                    seeds::derive_seed(self.seed(), "validate/projector"),
                    |x| self.ops.in_domain(x),
                )?;
                let mut worst = 0.0f64;
                for x in &pts {
                    let q = self.ops.project_common(x)?;
                    for op in self.ops.ops() {
                        if op.in_domain(q.coords()) {
                            worst = worst.max(op.eval(&q)?.dist(&q)? / (1.0 + q.norm()));
                        }
                    }
                }
                if worst > PROJECTOR_TOLERANCE {
                    errors.push(format!(
                        "projector onto X* is not fixed by every operator (defect {worst:e})"
                    ));
                }
                Some(worst)
            }
        };

        let domain_ok = self.check_domain(&mut errors)?;
        let interior = self.interior_criterion()?;

        let regularity = match (&self.spec.regularity, with_regularity, self.ops.common()) {
            (Some(r), true, Some(_)) => {
                Some(estimate_regularity(&self.ops, r.radius, r.samples, r.seed)?)
            }
            _ => None,
        };

        let report = ValidationReport {
            assumption1,
            expansive,
            waived,
            projector_defect,
            domain_ok,
            interior,
            regularity,
            errors,
        };
        self.validation = Some(report.clone());
        Ok(report)
    }

    fn check_domain(&self, errors: &mut Vec<String>) -> Result<bool> {
        let mut ok = true;
        for (i, x) in self.initial.iter().enumerate() {
            if !self.ops.in_domain(x.coords()) {
                errors.push(format!(
                    "initial point of agent {i} lies outside the operator domain"
                ));
                ok = false;
            }
        }
        // the only restricted domain in the catalog is [0, 1)^n; it must be
        // invariant under relaxed steps
        let restricted = !self.ops.in_domain(&vec![1.5; self.spec.dim]);
        if !restricted {
            return Ok(ok);
        }
        let mut rng = seeds::stream(self.seed(), "validate/domain");
        let alphas = [self.schedule.floor(), self.schedule.cap()];
        for _ in 0..DOMAIN_STARTS {
            let c: Vec<f64> = (0..self.spec.dim).map(|_| rng.random::<f64>()).collect();
            let x = Point::new(c, Arc::clone(self.layout()))?;
            for op in self.ops.ops() {
                let fx = op.eval(&x)?;
                for a in alphas {
                    let y: Vec<f64> = x
                        .coords()
                        .iter()
                        .zip(fx.coords())
                        .map(|(xv, fv)| xv + a * (fv - xv))
                        .collect();
                    if !self.ops.in_domain(&y) {
                        errors.push(format!(
                            "relaxed step leaves the domain from {:?}",
                            x.coords()
                        ));
                        return Ok(false);
                    }
                }
            }
        }
        Ok(ok)
    }

    /// For operators that are all projections onto sets `S_1, …, S_m`:
    /// whether some candidate point lies in `S_m` and strictly inside
    /// `S_1 ∩ ⋯ ∩ S_{m−1}`.
    pub fn interior_criterion(&self) -> Result<Option<bool>> {
        let sets: Vec<&ConvexSet> = match self
            .ops
            .ops()
            .iter()
            .map(|op| match op {
                NonexpansiveOp::Projection(s) => Some(s),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
        {
            Some(s) => s,
            None => return Ok(None),
        };
        let (last, rest) = sets.split_last().expect("operator set is nonempty");
        let mut candidates: Vec<Vec<f64>> = Vec::new();
        if let Some(p) = &self.spec.interior_point {
            candidates.push(p.clone());
        }
        let anchors: Vec<Vec<f64>> = sets.iter().map(|s| s.anchor()).collect();
        let mean: Vec<f64> = (0..self.spec.dim)
            .map(|j| anchors.iter().map(|a| a[j]).sum::<f64>() / anchors.len() as f64)
            .collect();
        candidates.extend(anchors);
        candidates.push(mean);
        candidates.push(vec![0.0; self.spec.dim]);
        if let Some(c) = self.ops.common() {
            let projected = candidates
                .iter()
                .map(|x| c.project_slice(x))
                .collect::<Result<Vec<_>>>()?;
            candidates.extend(projected);
        }
        for x in &candidates {
            if x.len() != self.spec.dim {
                continue;
            }
            if last.distance(x)? > 1e-12 {
                continue;
            }
            let mut inside = true;
            for s in rest {
                if s.interior_margin(x)? <= 0.0 {
                    inside = false;
                    break;
                }
            }
            if inside {
                return Ok(Some(true));
            }
        }
        Ok(Some(false))
    }
}

/// Largest `‖T(x) − T(y)‖ / ‖x − y‖` over seeded pairs in the domain.
fn lipschitz_sample(
    op: &NonexpansiveOp,
    layout: &Arc<BlockLayout>,
    radius: f64,
    seed: u64,
    i: usize,
) -> Result<f64> {
    let s = seeds::derive_seed(seed, &format!("validate/nonexpansive/{i}"));
    let pts = sample_points(layout, radius, 2 * NONEXPANSIVE_PAIRS, s, |x| {
        op.in_domain(x)
    })?;
    let mut worst = 0.0f64;
    for pair in pts.chunks(2) {
        let d = pair[0].dist(&pair[1])?;
        if d < 1e-12 {
            continue;
        }
        let fd = op.eval(&pair[0])?.dist(&op.eval(&pair[1])?)?;
        worst = worst.max(fd / d);
    }
    Ok(worst)
}
