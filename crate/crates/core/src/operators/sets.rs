//! Closed convex sets with closed-form projections, and projection onto
//! finite intersections of them.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::Point;

/// Serializable description of a convex set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    /// Axis-aligned box `lo ≤ x ≤ hi`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Closed Euclidean ball.
    Ball { center: Vec<f64>, radius: f64 },
    /// Halfspace `{x : a·x ≤ b}`.
    Halfspace { normal: Vec<f64>, offset: f64 },
    /// Affine subspace `{x : M x = r}` (rows of `M` given row-major).
    Affine {
        matrix: Vec<Vec<f64>>,
        rhs: Vec<f64>,
    },
}

/// A closed convex set ready for projection.
#[derive(Debug, Clone)]
pub enum ConvexSet {
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Halfspace {
        normal: Vec<f64>,
        offset: f64,
        norm_sq: f64,
    },
    Affine(AffineSet),
}

/// `{x : M x = r}` with a cached pseudo-inverse of `M`.
#[derive(Debug, Clone)]
pub struct AffineSet {
    matrix: DMatrix<f64>,
    rhs: DVector<f64>,
    pinv: DMatrix<f64>,
}

const PINV_EPS: f64 = 1e-12;

impl AffineSet {
    pub fn new(matrix: DMatrix<f64>, rhs: DVector<f64>) -> Result<Self> {
        if matrix.nrows() != rhs.len() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                got: rhs.len(),
            });
        }
        let pinv = pseudo_inverse(&matrix)?;
        let consistency = (&matrix * (&pinv * &rhs) - &rhs).norm();
        if consistency > 1e-9 * (1.0 + rhs.norm()) {
            return Err(Error::InconsistentSystem(consistency));
        }
        Ok(Self { matrix, rhs, pinv })
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    /// `x − M⁺(Mx − r)`.
    pub fn project_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        x - &self.pinv * (&self.matrix * x - &self.rhs)
    }
}

/// Moore–Penrose pseudo-inverse via SVD.
pub fn pseudo_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = m.amax().max(1.0);
    m.clone()
        .svd(true, true)
        .pseudo_inverse(PINV_EPS * scale)
        .map_err(|e| Error::InvalidParameter(format!("pseudo-inverse failed: {e}")))
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::InvalidParameter("matrix has no rows".into()));
    }
    let ncols = rows[0].len();
    if let Some(r) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch {
            expected: ncols,
            got: r.len(),
        });
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl ConvexSet {
    pub fn from_spec(spec: &SetSpec) -> Result<Self> {
        match spec {
            SetSpec::Box { lo, hi } => {
                if lo.len() != hi.len() || lo.is_empty() {
                    return Err(Error::InvalidParameter("box bounds length mismatch".into()));
                }
                if lo.iter().zip(hi).any(|(l, h)| !(l <= h)) {
                    return Err(Error::InvalidParameter("box has lo > hi".into()));
                }
                Ok(ConvexSet::Box {
                    lo: lo.clone(),
                    hi: hi.clone(),
                })
            }
            SetSpec::Ball { center, radius } => {
                if !(*radius >= 0.0) || center.is_empty() {
                    return Err(Error::InvalidParameter("ball needs radius ≥ 0".into()));
                }
                Ok(ConvexSet::Ball {
                    center: center.clone(),
                    radius: *radius,
                })
            }
            SetSpec::Halfspace { normal, offset } => {
                let norm_sq: f64 = normal.iter().map(|a| a * a).sum();
                if !(norm_sq > 0.0) {
                    return Err(Error::InvalidParameter("halfspace normal is zero".into()));
                }
                Ok(ConvexSet::Halfspace {
                    normal: normal.clone(),
                    offset: *offset,
                    norm_sq,
                })
            }
            SetSpec::Affine { matrix, rhs } => {
                let m = matrix_from_rows(matrix)?;
                Ok(ConvexSet::Affine(AffineSet::new(
                    m,
                    DVector::from_column_slice(rhs),
                )?))
            }
        }
    }

    pub fn to_spec(&self) -> SetSpec {
        match self {
            ConvexSet::Box { lo, hi } => SetSpec::Box {
                lo: lo.clone(),
                hi: hi.clone(),
            },
            ConvexSet::Ball { center, radius } => SetSpec::Ball {
                center: center.clone(),
                radius: *radius,
            },
            ConvexSet::Halfspace { normal, offset, .. } => SetSpec::Halfspace {
                normal: normal.clone(),
                offset: *offset,
            },
            ConvexSet::Affine(a) => SetSpec::Affine {
                matrix: a
                    .matrix
                    .row_iter()
                    .map(|r| r.iter().copied().collect())
                    .collect(),
                rhs: a.rhs.iter().copied().collect(),
            },
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::Box { lo, .. } => lo.len(),
            ConvexSet::Ball { center, .. } => center.len(),
            ConvexSet::Halfspace { normal, .. } => normal.len(),
            ConvexSet::Affine(a) => a.dim(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ConvexSet::Box { .. } => "box",
            ConvexSet::Ball { .. } => "ball",
            ConvexSet::Halfspace { .. } => "halfspace",
            ConvexSet::Affine(_) => "affine",
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Projection of raw coordinates.
    pub fn project_slice(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(match self {
            ConvexSet::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (l, h))| v.clamp(*l, *h))
                .collect(),
            ConvexSet::Ball { center, radius } => {
                let d: f64 = x
                    .iter()
                    .zip(center)
                    .map(|(a, c)| (a - c) * (a - c))
                    .sum::<f64>()
                    .sqrt();
                if d <= *radius {
                    x.to_vec()
                } else {
                    let s = radius / d;
                    x.iter().zip(center).map(|(a, c)| c + s * (a - c)).collect()
                }
            }
            ConvexSet::Halfspace {
                normal,
                offset,
                norm_sq,
            } => {
                let ax: f64 = normal.iter().zip(x).map(|(a, v)| a * v).sum();
                let t = ((ax - offset) / norm_sq).max(0.0);
                if t == 0.0 {
                    x.to_vec()
                } else {
                    x.iter().zip(normal).map(|(v, a)| v - t * a).collect()
                }
            }
            ConvexSet::Affine(a) => a
                .project_vec(&DVector::from_column_slice(x))
                .iter()
                .copied()
                .collect(),
        })
    }

    pub fn project(&self, x: &Point) -> Result<Point> {
        x.with_coords(self.project_slice(x.coords())?)
    }

    /// Euclidean distance to the set, by the set's own formula.
    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(match self {
            ConvexSet::Ball { center, radius } => {
                let d: f64 = x
                    .iter()
                    .zip(center)
                    .map(|(a, c)| (a - c) * (a - c))
                    .sum::<f64>()
                    .sqrt();
                (d - radius).max(0.0)
            }
            ConvexSet::Halfspace {
                normal,
                offset,
                norm_sq,
            } => {
                let ax: f64 = normal.iter().zip(x).map(|(a, v)| a * v).sum();
                ((ax - offset) / norm_sq.sqrt()).max(0.0)
            }
            _ => {
                let p = self.project_slice(x)?;
                p.iter()
                    .zip(x)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            }
        })
    }

    /// Signed slack: positive when `x` lies strictly inside by that margin.
    /// Affine sets have empty interior unless they are the whole space, so they
    /// report `-distance`.
    pub fn interior_margin(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(match self {
            ConvexSet::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (l, h))| (v - l).min(h - v))
                .fold(f64::INFINITY, f64::min),
            ConvexSet::Ball { center, radius } => {
                let d: f64 = x
                    .iter()
                    .zip(center)
                    .map(|(a, c)| (a - c) * (a - c))
                    .sum::<f64>()
                    .sqrt();
                radius - d
            }
            ConvexSet::Halfspace {
                normal,
                offset,
                norm_sq,
            } => {
                let ax: f64 = normal.iter().zip(x).map(|(a, v)| a * v).sum();
                (offset - ax) / norm_sq.sqrt()
            }
            ConvexSet::Affine(a) => {
                if a.matrix.iter().all(|v| *v == 0.0) {
                    f64::INFINITY
                } else {
                    -self.distance(x)?
                }
            }
        })
    }

    /// A natural "centre" of the set, used to look for interior points.
    pub fn anchor(&self) -> Vec<f64> {
        match self {
            ConvexSet::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect(),
            ConvexSet::Ball { center, .. } => center.clone(),
            ConvexSet::Halfspace {
                normal,
                offset,
                norm_sq,
            } => {
                // point at distance 1 inside the boundary
                let t = (offset - norm_sq.sqrt()) / norm_sq;
                normal.iter().map(|a| t * a).collect()
            }
            ConvexSet::Affine(a) => a
                .project_vec(&DVector::zeros(a.dim()))
                .iter()
                .copied()
                .collect(),
        }
    }
}

/// Projector onto a closed convex set or a finite intersection.
#[derive(Debug, Clone)]
pub enum FixedSetOracle {
    Set(ConvexSet),
    Intersection(Vec<ConvexSet>),
}

/// Tolerance for feasibility in the polyhedral active-set enumeration.
const POLY_FEAS_TOL: f64 = 1e-11;
/// Largest number of inequality constraints enumerated exactly.
const POLY_MAX_INEQ: usize = 16;
const DYKSTRA_MAX_ITERS: usize = 200_000;
const DYKSTRA_TOL: f64 = 1e-15;

impl FixedSetOracle {
    pub fn intersection(sets: Vec<ConvexSet>) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::InvalidParameter("empty intersection".into()));
        }
        let d = sets[0].dim();
        if let Some(s) = sets.iter().find(|s| s.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: s.dim(),
            });
        }
        if sets.len() == 1 {
            return Ok(FixedSetOracle::Set(sets.into_iter().next().unwrap()));
        }
        Ok(FixedSetOracle::Intersection(sets))
    }

    pub fn sets(&self) -> &[ConvexSet] {
        match self {
            FixedSetOracle::Set(s) => std::slice::from_ref(s),
            FixedSetOracle::Intersection(v) => v,
        }
    }

    pub fn project_slice(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            FixedSetOracle::Set(s) => s.project_slice(x),
            FixedSetOracle::Intersection(sets) => {
                let polyhedral = sets
                    .iter()
                    .all(|s| matches!(s, ConvexSet::Halfspace { .. } | ConvexSet::Affine(_)));
                let n_ineq = sets
                    .iter()
                    .filter(|s| matches!(s, ConvexSet::Halfspace { .. }))
                    .count();
                if polyhedral && n_ineq <= POLY_MAX_INEQ {
                    project_polyhedron(sets, x)
                } else {
                    dykstra(sets, x)
                }
            }
        }
    }

    pub fn project(&self, x: &Point) -> Result<Point> {
        x.with_coords(self.project_slice(x.coords())?)
    }

    pub fn distance(&self, x: &Point) -> Result<f64> {
        x.dist(&self.project(x)?)
    }
}

/// Exact projection onto `{a_j·x ≤ b_j} ∩ {M x = r}` by enumerating active
/// sets: the projection is the nearest feasible point among the projections
/// onto the affine hulls of every subset of inequality constraints.
fn project_polyhedron(sets: &[ConvexSet], x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    let mut eq_rows: Vec<Vec<f64>> = Vec::new();
    let mut eq_rhs: Vec<f64> = Vec::new();
    let mut ineq: Vec<(&[f64], f64)> = Vec::new();
    for s in sets {
        match s {
            ConvexSet::Halfspace { normal, offset, .. } => ineq.push((normal, *offset)),
            ConvexSet::Affine(a) => {
                for (i, row) in a.matrix.row_iter().enumerate() {
                    eq_rows.push(row.iter().copied().collect());
                    eq_rhs.push(a.rhs[i]);
                }
            }
            _ => unreachable!("non-polyhedral set"),
        }
    }
    let xv = DVector::from_column_slice(x);
    let feasible = |y: &DVector<f64>| -> bool {
        let scale = 1.0 + y.amax();
        ineq.iter().all(|(a, b)| {
            let ay: f64 = a.iter().zip(y.iter()).map(|(p, q)| p * q).sum();
            ay - b <= POLY_FEAS_TOL * scale
        }) && eq_rows.iter().zip(&eq_rhs).all(|(a, b)| {
            let ay: f64 = a.iter().zip(y.iter()).map(|(p, q)| p * q).sum();
            (ay - b).abs() <= 1e-9 * scale
        })
    };
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1u32 << ineq.len()) {
        let mut rows = eq_rows.clone();
        let mut rhs = eq_rhs.clone();
        for (j, (a, b)) in ineq.iter().enumerate() {
            if mask & (1 << j) != 0 {
                rows.push(a.to_vec());
                rhs.push(*b);
            }
        }
        let y = if rows.is_empty() {
            xv.clone()
        } else {
            let m = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
            let r = DVector::from_vec(rhs);
            let pinv = pseudo_inverse(&m)?;
            // skip inconsistent active sets
            if (&m * (&pinv * &r) - &r).norm() > 1e-9 * (1.0 + r.norm()) {
                continue;
            }
            &xv - &pinv * (&m * &xv - &r)
        };
        if !feasible(&y) {
            continue;
        }
        let d = (&y - &xv).norm();
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, y));
        }
    }
    best.map(|(_, y)| y.iter().copied().collect())
        .ok_or_else(|| Error::InvalidParameter("polyhedral intersection is empty".into()))
}

/// Dykstra's alternating projection algorithm for the projection onto an
/// intersection of convex sets.
fn dykstra(sets: &[ConvexSet], x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    let mut y = x.to_vec();
    let mut incr = vec![vec![0.0; n]; sets.len()];
    for _ in 0..DYKSTRA_MAX_ITERS {
        let prev = y.clone();
        for (s, p) in sets.iter().zip(incr.iter_mut()) {
            let z: Vec<f64> = y.iter().zip(p.iter()).map(|(a, b)| a + b).collect();
            let proj = s.project_slice(&z)?;
            for j in 0..n {
                p[j] = z[j] - proj[j];
            }
            y = proj;
        }
        let change: f64 = y
            .iter()
            .zip(&prev)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if change <= DYKSTRA_TOL * (1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
            break;
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(spec: SetSpec) -> ConvexSet {
        ConvexSet::from_spec(&spec).unwrap()
    }

    #[test]
    fn box_projection_interval() {
        let s = set(SetSpec::Box {
            lo: vec![0.0],
            hi: vec![0.5],
        });
        assert_eq!(s.project_slice(&[1.0]).unwrap(), vec![0.5]);
        assert_eq!(s.project_slice(&[-2.0]).unwrap(), vec![0.0]);
        assert_eq!(s.project_slice(&[0.25]).unwrap(), vec![0.25]);
    }

    #[test]
    fn halfspace_projection_closed_form() {
        let s = set(SetSpec::Halfspace {
            normal: vec![1.0, 0.0],
            offset: 0.0,
        });
        assert_eq!(s.project_slice(&[2.0, 3.0]).unwrap(), vec![0.0, 3.0]);
        assert_eq!(s.project_slice(&[-1.0, 3.0]).unwrap(), vec![-1.0, 3.0]);
    }

    /// Brute-force oracle: minimize ‖y − x‖ over the boundary line of the
    /// halfspace by a one-dimensional search along the boundary line.
    #[test]
    fn halfspace_projection_matches_numeric_minimization() {
        let a = [3.0, -4.0];
        let b = 2.0;
        let s = set(SetSpec::Halfspace {
            normal: a.to_vec(),
            offset: b,
        });
        let x = [5.0, -1.0];
        // boundary: 3 y0 - 4 y1 = 2  =>  y = (t, (3t - 2)/4)
        let f = |t: f64| {
            let y1 = (3.0 * t - 2.0) / 4.0;
            (t - x[0]).powi(2) + (y1 - x[1]).powi(2)
        };
        // bisection on the sign of f'
        let df = |t: f64| {
            let y1 = (3.0 * t - 2.0) / 4.0;
            2.0 * (t - x[0]) + 1.5 * (y1 - x[1])
        };
        let (mut lo, mut hi) = (-100.0_f64, 100.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if df(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert!(f(0.5 * (lo + hi)) <= f(0.5 * (lo + hi) + 1e-3));
        let t = 0.5 * (lo + hi);
        let oracle = [t, (3.0 * t - 2.0) / 4.0];
        let p = s.project_slice(&x).unwrap();
        assert!((p[0] - oracle[0]).abs() < 1e-9 && (p[1] - oracle[1]).abs() < 1e-9);
    }

    #[test]
    fn ball_and_affine() {
        let b = set(SetSpec::Ball {
            center: vec![1.0, 1.0],
            radius: 1.0,
        });
        let p = b.project_slice(&[1.0, 4.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-15 && (p[1] - 2.0).abs() < 1e-15);
        assert!((b.distance(&[1.0, 4.0]).unwrap() - 2.0).abs() < 1e-15);

        // line x0 + x1 = 1
        let a = set(SetSpec::Affine {
            matrix: vec![vec![1.0, 1.0]],
            rhs: vec![1.0],
        });
        let p = a.project_slice(&[1.0, 1.0]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn inconsistent_affine_rejected() {
        let r = ConvexSet::from_spec(&SetSpec::Affine {
            matrix: vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            rhs: vec![0.0, 1.0],
        });
        assert!(matches!(r, Err(Error::InconsistentSystem(_))));
    }

    #[test]
    fn polyhedral_matches_dykstra() {
        let sets = vec![
            set(SetSpec::Halfspace {
                normal: vec![1.0, 1.0],
                offset: 1.0,
            }),
            set(SetSpec::Halfspace {
                normal: vec![1.0, -1.0],
                offset: 1.0,
            }),
        ];
        for x in [[4.0, 3.0], [5.0, -2.0], [3.0, 0.1], [-1.0, 0.0], [0.7, 2.0]] {
            let exact = project_polyhedron(&sets, &x).unwrap();
            let iter = dykstra(&sets, &x).unwrap();
            for j in 0..2 {
                assert!((exact[j] - iter[j]).abs() < 1e-10, "{x:?}");
            }
        }
        // vertex case
        let p = project_polyhedron(&sets, &[3.0, 0.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1].abs() < 1e-12);
    }
}
