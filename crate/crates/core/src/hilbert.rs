//! Finite-dimensional real coordinate space with a contiguous block structure.
//!
//! A [`Point`] lives in `ℝⁿ = ℝ^{n₁} ⊕ … ⊕ ℝ^{n_m}` where the blocks are
//! consecutive coordinate ranges described by a [`BlockLayout`]. Besides the
//! Euclidean inner product, block-coordinate methods use the
//! probability-weighted norm
//!
//! ```text
//! |||y|||² = Σ_l ‖y_l‖² / p_l
//! ```
//!
//! which dominates the Euclidean norm and is dominated by `‖y‖²/min_l p_l`.

use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Absolute tolerance used when checking that weights sum to one.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Relative tolerance used for algebraic identity checks.
pub const IDENTITY_REL_TOLERANCE: f64 = 1e-10;

/// Partition of `n` coordinates into `m` contiguous blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl BlockLayout {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidLayout("at least one block required".into()));
        }
        if let Some(l) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidLayout(format!("block {l} has size 0")));
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &s in &sizes {
            acc += s;
            offsets.push(acc);
        }
        Ok(Self { sizes, offsets })
    }

    /// A single block spanning all `n` coordinates.
    pub fn single(n: usize) -> Result<Self> {
        Self::new(vec![n])
    }

    /// `n` blocks of one coordinate each.
    pub fn scalar_blocks(n: usize) -> Result<Self> {
        Self::new(vec![1; n])
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().expect("offsets never empty")
    }

    pub fn num_blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Coordinate range of block `l`.
    pub fn block_range(&self, l: usize) -> Range<usize> {
        self.offsets[l]..self.offsets[l + 1]
    }
}

/// A point of the ambient space.
#[derive(Debug, Clone)]
pub struct Point {
    coords: Vec<f64>,
    layout: Arc<BlockLayout>,
}

impl PartialEq for Point {
    fn eq(&self, other: &Self) -> bool {
        self.coords == other.coords && *self.layout == *other.layout
    }
}

impl Point {
    /// Builds a point, rejecting non-finite entries and length mismatches.
    pub fn new(coords: Vec<f64>, layout: Arc<BlockLayout>) -> Result<Self> {
        if coords.len() != layout.dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.dim(),
                got: coords.len(),
            });
        }
        if let Some(j) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite(j));
        }
        Ok(Self { coords, layout })
    }

    /// Point with a single block covering all coordinates.
    pub fn from_vec(coords: Vec<f64>) -> Result<Self> {
        let layout = Arc::new(BlockLayout::single(coords.len().max(1))?);
        Self::new(coords, layout)
    }

    pub fn zeros(layout: Arc<BlockLayout>) -> Self {
        Self {
            coords: vec![0.0; layout.dim()],
            layout,
        }
    }

    /// Internal constructor for arithmetic results; callers guarantee the
    /// length matches the layout.
    pub(crate) fn from_parts(coords: Vec<f64>, layout: Arc<BlockLayout>) -> Self {
        debug_assert_eq!(coords.len(), layout.dim());
        Self { coords, layout }
    }

    /// Same layout, new coordinates.
    pub fn with_coords(&self, coords: Vec<f64>) -> Result<Self> {
        Self::new(coords, Arc::clone(&self.layout))
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn layout(&self) -> &Arc<BlockLayout> {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn block(&self, l: usize) -> &[f64] {
        &self.coords[self.layout.block_range(l)]
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.coords.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn norm_sq(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub(crate) fn check_same(&self, other: &Point) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        if *self.layout != *other.layout {
            return Err(Error::LayoutMismatch(format!(
                "{:?} vs {:?}",
                self.layout.block_sizes(),
                other.layout.block_sizes()
            )));
        }
        Ok(())
    }

    pub fn sub(&self, other: &Point) -> Result<Point> {
        self.check_same(other)?;
        let coords = self
            .coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Point::from_parts(coords, Arc::clone(&self.layout)))
    }

    pub fn add(&self, other: &Point) -> Result<Point> {
        self.check_same(other)?;
        let coords = self
            .coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Point::from_parts(coords, Arc::clone(&self.layout)))
    }

    pub fn scale(&self, s: f64) -> Point {
        let coords = self.coords.iter().map(|c| s * c).collect();
        Point::from_parts(coords, Arc::clone(&self.layout))
    }

    /// Euclidean distance.
    pub fn dist(&self, other: &Point) -> Result<f64> {
        Ok(self.sub(other)?.norm())
    }
}

/// Euclidean inner product `Σ x_j y_j`.
pub fn inner(x: &Point, y: &Point) -> Result<f64> {
    x.check_same(y)?;
    Ok(x.coords.iter().zip(&y.coords).map(|(a, b)| a * b).sum())
}

/// Block probabilities defining the weighted norm `|||·|||`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedNorm {
    probs: Vec<f64>,
}

impl WeightedNorm {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidParameter(
                "empty block probability list".into(),
            ));
        }
        for (l, &p) in probs.iter().enumerate() {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "block probability p_{l} = {p} outside (0, 1]"
                )));
            }
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `p₀ = min_l p_l`.
    pub fn p_min(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Weighted inner product `⟨⟨y, z⟩⟩ = Σ_l ⟨y_l, z_l⟩ / p_l`.
    pub fn inner(&self, y: &Point, z: &Point) -> Result<f64> {
        y.check_same(z)?;
        self.check_blocks(y)?;
        let layout = y.layout();
        Ok((0..layout.num_blocks())
            .map(|l| {
                let r = layout.block_range(l);
                let s: f64 = y.coords[r.clone()]
                    .iter()
                    .zip(&z.coords[r])
                    .map(|(a, b)| a * b)
                    .sum();
                s / self.probs[l]
            })
            .sum())
    }

    fn check_blocks(&self, y: &Point) -> Result<()> {
        if y.layout().num_blocks() != self.probs.len() {
            return Err(Error::LayoutMismatch(format!(
                "point has {} blocks, norm has {} probabilities",
                y.layout().num_blocks(),
                self.probs.len()
            )));
        }
        Ok(())
    }
}

/// `|||y|||² = Σ_l ‖y_l‖² / p_l`.
pub fn weighted_norm_sq(y: &Point, w: &WeightedNorm) -> Result<f64> {
    w.check_blocks(y)?;
    let layout = y.layout();
    Ok((0..layout.num_blocks())
        .map(|l| {
            let b = y.block(l);
            b.iter().map(|c| c * c).sum::<f64>() / w.probs[l]
        })
        .sum())
}

/// Checks that `weights` are nonnegative and sum to one within [`SUM_TOLERANCE`].
pub fn check_stochastic(weights: &[f64]) -> Result<()> {
    if let Some((j, w)) = weights
        .iter()
        .enumerate()
        .find(|(_, w)| !(w.is_finite() && **w >= 0.0))
    {
        return Err(Error::InvalidWeights(format!(
            "weight {j} = {w} is negative or non-finite"
        )));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::InvalidWeights(format!(
            "weights sum to {sum}, not 1"
        )));
    }
    Ok(())
}

/// Convex combination `Σ_j w_j x_j`.
///
/// Accumulation runs in index order starting from the first nonzero term, so
/// a single unit weight reproduces its point bit-for-bit.
pub fn convex_combine(weights: &[f64], points: &[Point]) -> Result<Point> {
    if weights.len() != points.len() || points.is_empty() {
        return Err(Error::InvalidWeights(format!(
            "{} weights for {} points",
            weights.len(),
            points.len()
        )));
    }
    check_stochastic(weights)?;
    let first = &points[0];
    for p in &points[1..] {
        first.check_same(p)?;
    }
    let mut coords: Option<Vec<f64>> = None;
    for (w, p) in weights.iter().zip(points) {
        if *w == 0.0 {
            continue;
        }
        match coords.as_mut() {
            None => coords = Some(p.coords.iter().map(|x| w * x).collect()),
            Some(acc) => {
                for (c, x) in acc.iter_mut().zip(&p.coords) {
                    *c += w * x;
                }
            }
        }
    }
    let coords = coords.expect("stochastic weights have a nonzero entry");
    Ok(Point::from_parts(coords, Arc::clone(first.layout())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_blocks(v: Vec<f64>) -> Point {
        let layout = Arc::new(BlockLayout::scalar_blocks(v.len()).unwrap());
        Point::new(v, layout).unwrap()
    }

    #[test]
    fn layout_offsets() {
        let l = BlockLayout::new(vec![2, 1, 3]).unwrap();
        assert_eq!(l.dim(), 6);
        assert_eq!(l.block_range(0), 0..2);
        assert_eq!(l.block_range(1), 2..3);
        assert_eq!(l.block_range(2), 3..6);
        assert!(BlockLayout::new(vec![]).is_err());
        assert!(BlockLayout::new(vec![2, 0]).is_err());
    }

    #[test]
    fn point_rejects_bad_input() {
        let layout = Arc::new(BlockLayout::single(2).unwrap());
        assert!(Point::new(vec![1.0], layout.clone()).is_err());
        assert!(matches!(
            Point::new(vec![1.0, f64::NAN], layout),
            Err(Error::NonFinite(1))
        ));
    }

    #[test]
    fn inner_examples() {
        let x = Point::from_vec(vec![1.0, 2.0]).unwrap();
        let y = Point::from_vec(vec![3.0, 4.0]).unwrap();
        assert_eq!(inner(&x, &y).unwrap(), 11.0);
        let z = Point::from_vec(vec![0.0, 0.0]).unwrap();
        assert_eq!(inner(&x, &z).unwrap(), 0.0);
        let e1 = Point::from_vec(vec![1.0, 0.0]).unwrap();
        assert_eq!(inner(&e1, &e1).unwrap(), 1.0);
        let short = Point::from_vec(vec![1.0]).unwrap();
        assert!(inner(&x, &short).is_err());
    }

    #[test]
    fn weighted_norm_examples() {
        let y = scalar_blocks(vec![1.0, 1.0]);
        let w = WeightedNorm::new(vec![0.5, 1.0]).unwrap();
        assert_eq!(weighted_norm_sq(&y, &w).unwrap(), 3.0);

        let y = scalar_blocks(vec![1.0, 2.0]);
        let w = WeightedNorm::new(vec![0.25, 0.5]).unwrap();
        assert_eq!(weighted_norm_sq(&y, &w).unwrap(), 12.0);

        let y = scalar_blocks(vec![0.3, -1.7, 2.0]);
        let w = WeightedNorm::new(vec![1.0; 3]).unwrap();
        assert!((weighted_norm_sq(&y, &w).unwrap() - y.norm_sq()).abs() < 1e-15);
    }

    #[test]
    fn weighted_norm_errors() {
        assert!(WeightedNorm::new(vec![0.0, 1.0]).is_err());
        assert!(WeightedNorm::new(vec![-0.1]).is_err());
        assert!(WeightedNorm::new(vec![1.5]).is_err());
        let y = scalar_blocks(vec![1.0, 1.0]);
        let w = WeightedNorm::new(vec![0.5]).unwrap();
        assert!(weighted_norm_sq(&y, &w).is_err());
    }

    #[test]
    fn convex_combine_examples() {
        let x = Point::from_vec(vec![1.5, -2.0]).unwrap();
        let y = Point::from_vec(vec![7.0, 3.0]).unwrap();
        assert_eq!(
            convex_combine(&[1.0, 0.0], &[x.clone(), y.clone()]).unwrap(),
            x
        );

        let a = Point::from_vec(vec![0.0]).unwrap();
        let b = Point::from_vec(vec![2.0]).unwrap();
        assert_eq!(
            convex_combine(&[0.5, 0.5], &[a, b]).unwrap().coords(),
            &[1.0]
        );

        let a = Point::from_vec(vec![4.0]).unwrap();
        let b = Point::from_vec(vec![0.0]).unwrap();
        assert_eq!(
            convex_combine(&[0.25, 0.75], &[a, b]).unwrap().coords(),
            &[1.0]
        );
    }

    #[test]
    fn convex_combine_errors() {
        let a = Point::from_vec(vec![4.0]).unwrap();
        let b = Point::from_vec(vec![0.0]).unwrap();
        assert!(convex_combine(&[0.5, 0.6], &[a.clone(), b.clone()]).is_err());
        assert!(convex_combine(&[1.2, -0.2], &[a.clone(), b]).is_err());
        let c = Point::from_vec(vec![0.0, 1.0]).unwrap();
        assert!(convex_combine(&[0.5, 0.5], &[a, c]).is_err());
    }
}
