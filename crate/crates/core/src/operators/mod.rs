//! Nonexpansive operators, the averaging combinator, fixed-set oracles and
//! sampling-based regularity estimates.

mod regularity;
mod sets;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{BlockLayout, Point};

pub use regularity::{
    check_proposition1, estimate_linear_regularity, estimate_power_regularity, estimate_regularity,
    sample_points, RegularityEstimate, RESIDUAL_FLOOR,
};
pub(crate) use sets::matrix_from_rows;
pub use sets::{pseudo_inverse, spectral_norm, AffineSet, ConvexSet, FixedSetOracle, SetSpec};

/// Serializable operator description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OpSpec {
    Identity,
    /// `x ↦ −x`.
    Negation,
    /// Metric projection onto a convex set.
    Project {
        set: SetSpec,
    },
    /// `x ↦ x − step·(H x + g)` for the convex quadratic `½xᵀHx + gᵀx`.
    GradientStep {
        hessian: Vec<Vec<f64>>,
        linear: Vec<f64>,
        step: f64,
    },
    /// `x ↦ x − Aᵀ(Ax − b)/σ` for a row block `A x = b`; `σ` defaults to the
    /// largest squared singular value of `A`.
    LinearEquation {
        rows: Vec<Vec<f64>>,
        rhs: Vec<f64>,
        #[serde(default)]
        sigma: Option<f64>,
    },
    /// Coordinatewise `x ↦ x²` on `[0, 1)ⁿ`.
    Square,
    /// `(1 − α)·Id + α·inner`.
    Averaged {
        inner: Box<OpSpec>,
        alpha: f64,
    },
}

/// An operator `T: ℝⁿ → ℝⁿ` with an optional exact projector onto `Fix(T)`.
#[derive(Debug, Clone)]
pub enum NonexpansiveOp {
    Identity,
    Negation,
    Projection(ConvexSet),
    GradientStep {
        hessian: DMatrix<f64>,
        linear: DVector<f64>,
        step: f64,
        minimizers: AffineSet,
    },
    LinearEquation {
        rows: DMatrix<f64>,
        rhs: DVector<f64>,
        sigma: f64,
        solutions: AffineSet,
    },
    Square,
    Averaged {
        inner: Box<NonexpansiveOp>,
        alpha: f64,
    },
}

impl NonexpansiveOp {
    pub fn from_spec(spec: &OpSpec) -> Result<Self> {
        Ok(match spec {
            OpSpec::Identity => NonexpansiveOp::Identity,
            OpSpec::Negation => NonexpansiveOp::Negation,
            OpSpec::Project { set } => NonexpansiveOp::Projection(ConvexSet::from_spec(set)?),
            OpSpec::GradientStep {
                hessian,
                linear,
                step,
            } => Self::gradient_step(
                matrix_from_rows(hessian)?,
                DVector::from_column_slice(linear),
                *step,
            )?,
            OpSpec::LinearEquation { rows, rhs, sigma } => Self::linear_equation(
                matrix_from_rows(rows)?,
                DVector::from_column_slice(rhs),
                *sigma,
            )?,
            OpSpec::Square => NonexpansiveOp::Square,
            OpSpec::Averaged { inner, alpha } => {
                averaged(NonexpansiveOp::from_spec(inner)?, *alpha)?
            }
        })
    }

    pub fn to_spec(&self) -> OpSpec {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            m.row_iter().map(|r| r.iter().copied().collect()).collect()
        };
        match self {
            NonexpansiveOp::Identity => OpSpec::Identity,
            NonexpansiveOp::Negation => OpSpec::Negation,
            NonexpansiveOp::Projection(s) => OpSpec::Project { set: s.to_spec() },
            NonexpansiveOp::GradientStep {
                hessian,
                linear,
                step,
                ..
            } => OpSpec::GradientStep {
                hessian: rows(hessian),
                linear: linear.iter().copied().collect(),
                step: *step,
            },
            NonexpansiveOp::LinearEquation {
                rows: a,
                rhs,
                sigma,
                ..
            } => OpSpec::LinearEquation {
                rows: rows(a),
                rhs: rhs.iter().copied().collect(),
                sigma: Some(*sigma),
            },
            NonexpansiveOp::Square => OpSpec::Square,
            NonexpansiveOp::Averaged { inner, alpha } => OpSpec::Averaged {
                inner: Box::new(inner.to_spec()),
                alpha: *alpha,
            },
        }
    }

    pub fn projection(set: ConvexSet) -> Self {
        NonexpansiveOp::Projection(set)
    }

    /// Gradient map of `½xᵀHx + gᵀx`; requires symmetric PSD `H` and
    /// `0 < step < 2/λ_max(H)`.
    pub fn gradient_step(hessian: DMatrix<f64>, linear: DVector<f64>, step: f64) -> Result<Self> {
        let n = hessian.ncols();
        if hessian.nrows() != n || linear.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: linear.len(),
            });
        }
        if (&hessian - hessian.transpose()).amax() > 1e-12 * hessian.amax().max(1.0) {
            return Err(Error::InvalidParameter("hessian is not symmetric".into()));
        }
        let eig = hessian.clone().symmetric_eigen();
        let lmin = eig.eigenvalues.min();
        let lmax = eig.eigenvalues.max();
        if lmin < -1e-12 * lmax.abs().max(1.0) {
            return Err(Error::InvalidParameter(
                "hessian is not positive semidefinite".into(),
            ));
        }
        if !(step > 0.0 && (lmax == 0.0 || step < 2.0 / lmax)) {
            return Err(Error::InvalidParameter(format!(
                "gradient step {step} outside (0, 2/L) with L = {lmax}"
            )));
        }
        let minimizers = AffineSet::new(hessian.clone(), -linear.clone())?;
        Ok(NonexpansiveOp::GradientStep {
            hessian,
            linear,
            step,
            minimizers,
        })
    }

    /// Normalized Landweber map for the row block `A x = b`.
    pub fn linear_equation(
        rows: DMatrix<f64>,
        rhs: DVector<f64>,
        sigma: Option<f64>,
    ) -> Result<Self> {
        let smax = spectral_norm(&rows);
        let smax_sq = smax * smax;
        if smax_sq == 0.0 {
            return Err(Error::InvalidParameter("row block is zero".into()));
        }
        let sigma = sigma.unwrap_or(smax_sq);
        // σ ≥ smax² keeps the spectrum of I − AᵀA/σ inside [0, 1].
        if !(sigma >= smax_sq * (1.0 - 1e-12)) {
            return Err(Error::InvalidParameter(format!(
                "sigma {sigma} below largest squared singular value {smax_sq}"
            )));
        }
        let solutions = AffineSet::new(rows.clone(), rhs.clone())?;
        Ok(NonexpansiveOp::LinearEquation {
            rows,
            rhs,
            sigma,
            solutions,
        })
    }

    pub fn name(&self) -> String {
        match self {
            NonexpansiveOp::Identity => "identity".into(),
            NonexpansiveOp::Negation => "negation".into(),
            NonexpansiveOp::Projection(s) => format!("project[{}]", s.kind()),
            NonexpansiveOp::GradientStep { .. } => "gradient_step".into(),
            NonexpansiveOp::LinearEquation { .. } => "linear_equation".into(),
            NonexpansiveOp::Square => "square".into(),
            NonexpansiveOp::Averaged { inner, alpha } => {
                format!("averaged({}, {alpha})", inner.name())
            }
        }
    }

    /// Dimension the operator is tied to, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            NonexpansiveOp::Identity | NonexpansiveOp::Negation | NonexpansiveOp::Square => None,
            NonexpansiveOp::Projection(s) => Some(s.dim()),
            NonexpansiveOp::GradientStep { hessian, .. } => Some(hessian.ncols()),
            NonexpansiveOp::LinearEquation { rows, .. } => Some(rows.ncols()),
            NonexpansiveOp::Averaged { inner, .. } => inner.dim(),
        }
    }

    /// Whether `x` lies in the operator's domain.
    pub fn in_domain(&self, x: &[f64]) -> bool {
        match self {
            NonexpansiveOp::Square => x.iter().all(|v| (0.0..1.0).contains(v)),
            NonexpansiveOp::Averaged { inner, .. } => inner.in_domain(x),
            _ => true,
        }
    }

    /// Whether the operator is nonexpansive on its whole domain. The
    /// coordinatewise square has Lipschitz constant 2 on `[0, 1)`; it is
    /// carried only as a regularity example.
    pub fn is_nonexpansive(&self) -> bool {
        match self {
            NonexpansiveOp::Square => false,
            NonexpansiveOp::Averaged { inner, .. } => inner.is_nonexpansive(),
            _ => true,
        }
    }

    fn check(&self, x: &Point) -> Result<()> {
        if let Some(d) = self.dim() {
            if d != x.dim() {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: x.dim(),
                });
            }
        }
        if !self.in_domain(x.coords()) {
            return Err(Error::OutsideDomain {
                op: self.name(),
                detail: format!("{:?} not in [0, 1)^n", x.coords()),
            });
        }
        Ok(())
    }

    /// `T(x)`.
    pub fn eval(&self, x: &Point) -> Result<Point> {
        self.check(x)?;
        let c = x.coords();
        let out: Vec<f64> = match self {
            NonexpansiveOp::Identity => c.to_vec(),
            NonexpansiveOp::Negation => c.iter().map(|v| -v).collect(),
            NonexpansiveOp::Projection(s) => s.project_slice(c)?,
            NonexpansiveOp::GradientStep {
                hessian,
                linear,
                step,
                ..
            } => {
                let xv = DVector::from_column_slice(c);
                let g = hessian * &xv + linear;
                (xv - g * *step).iter().copied().collect()
            }
            NonexpansiveOp::LinearEquation {
                rows, rhs, sigma, ..
            } => {
                let xv = DVector::from_column_slice(c);
                let r = rows * &xv - rhs;
                (xv - rows.transpose() * r / *sigma)
                    .iter()
                    .copied()
                    .collect()
            }
            NonexpansiveOp::Square => c.iter().map(|v| v * v).collect(),
            NonexpansiveOp::Averaged { inner, alpha } => {
                let t = inner.eval(x)?;
                c.iter()
                    .zip(t.coords())
                    .map(|(v, tv)| (1.0 - alpha) * v + alpha * tv)
                    .collect()
            }
        };
        x.with_coords(out)
    }

    /// Projection onto `Fix(T)` when available in closed form.
    pub fn project_fixed(&self, x: &Point) -> Result<Point> {
        self.check(x)?;
        match self {
            NonexpansiveOp::Identity => Ok(x.clone()),
            NonexpansiveOp::Negation | NonexpansiveOp::Square => {
                Ok(Point::zeros(Arc::clone(x.layout())))
            }
            NonexpansiveOp::Projection(s) => s.project(x),
            NonexpansiveOp::GradientStep { minimizers, .. } => x.with_coords(
                minimizers
                    .project_vec(&DVector::from_column_slice(x.coords()))
                    .iter()
                    .copied()
                    .collect(),
            ),
            NonexpansiveOp::LinearEquation { solutions, .. } => x.with_coords(
                solutions
                    .project_vec(&DVector::from_column_slice(x.coords()))
                    .iter()
                    .copied()
                    .collect(),
            ),
            NonexpansiveOp::Averaged { inner, .. } => inner.project_fixed(x),
        }
    }

    /// Fixed set as a convex set, where one exists in closed form.
    pub fn fixed_set(&self, dim: usize) -> Option<ConvexSet> {
        match self {
            NonexpansiveOp::Identity => None,
            NonexpansiveOp::Negation | NonexpansiveOp::Square => Some(ConvexSet::Box {
                lo: vec![0.0; dim],
                hi: vec![0.0; dim],
            }),
            NonexpansiveOp::Projection(s) => Some(s.clone()),
            NonexpansiveOp::GradientStep { minimizers, .. } => {
                Some(ConvexSet::Affine(minimizers.clone()))
            }
            NonexpansiveOp::LinearEquation { solutions, .. } => {
                Some(ConvexSet::Affine(solutions.clone()))
            }
            NonexpansiveOp::Averaged { inner, .. } => inner.fixed_set(dim),
        }
    }
}

/// `x ↦ (1 − α)·x + α·op(x)`, for `0 < α < 1`.
pub fn averaged(op: NonexpansiveOp, alpha: f64) -> Result<NonexpansiveOp> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "averaging parameter {alpha} outside (0, 1)"
        )));
    }
    Ok(NonexpansiveOp::Averaged {
        inner: Box::new(op),
        alpha,
    })
}

/// `‖T(x) − x‖`.
pub fn residual(op: &NonexpansiveOp, x: &Point) -> Result<f64> {
    op.eval(x)?.dist(x)
}

/// The operators held by the agents, one per agent, plus an optional
/// projector onto their common fixed set.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    ops: Vec<NonexpansiveOp>,
    common: Option<FixedSetOracle>,
    layout: Arc<BlockLayout>,
}

impl OperatorSet {
    pub fn new(
        ops: Vec<NonexpansiveOp>,
        common: Option<FixedSetOracle>,
        layout: Arc<BlockLayout>,
    ) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::InvalidParameter("operator set needs N ≥ 1".into()));
        }
        let n = layout.dim();
        for op in &ops {
            if let Some(d) = op.dim() {
                if d != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: d,
                    });
                }
            }
        }
        if let Some(c) = &common {
            for s in c.sets() {
                if s.dim() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: s.dim(),
                    });
                }
            }
        }
        Ok(Self {
            ops,
            common,
            layout,
        })
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn ops(&self) -> &[NonexpansiveOp] {
        &self.ops
    }

    pub fn op(&self, i: usize) -> &NonexpansiveOp {
        &self.ops[i]
    }

    pub fn layout(&self) -> &Arc<BlockLayout> {
        &self.layout
    }

    pub fn common(&self) -> Option<&FixedSetOracle> {
        self.common.as_ref()
    }

    /// `P_{X*}(x)`.
    pub fn project_common(&self, x: &Point) -> Result<Point> {
        match &self.common {
            Some(c) => c.project(x),
            None => Err(Error::MissingProjector("common fixed set".into())),
        }
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        self.ops.iter().all(|op| op.in_domain(x))
    }
}
