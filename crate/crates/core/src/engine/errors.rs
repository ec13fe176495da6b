use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{BlockLayout, Point};
use crate::seeds::{self, StreamRng};

/// Norm schedule of the evaluation errors `ε_{i,k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ErrorSpec {
    #[default]
    Zero,
    /// `‖ε_{i,k}‖ = scale · ratio^k`.
    Geometric { scale: f64, ratio: f64 },
    /// `‖ε_{i,k}‖ = scale · (k + 1)^(−exponent)`, exponent > 1.
    Power { scale: f64, exponent: f64 },
    /// `‖ε_{i,k}‖ = norms[k]`, zero past the end.
    Custom { norms: Vec<f64> },
}

impl ErrorSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        match self {
            ErrorSpec::Zero => Ok(()),
            ErrorSpec::Geometric { scale, ratio } => {
                if !(*scale >= 0.0 && scale.is_finite()) {
                    return bad(format!("error scale {scale} must be finite and ≥ 0"));
                }
                if !(0.0..1.0).contains(ratio) {
                    return bad(format!("geometric error ratio {ratio} outside [0, 1)"));
                }
                Ok(())
            }
            ErrorSpec::Power { scale, exponent } => {
                if !(*scale >= 0.0 && scale.is_finite()) {
                    return bad(format!("error scale {scale} must be finite and ≥ 0"));
                }
                if !(*exponent > 1.0) {
                    return bad(format!("power error exponent {exponent} must exceed 1"));
                }
                Ok(())
            }
            ErrorSpec::Custom { norms } => {
                if let Some(v) = norms.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                    return bad(format!("custom error norm {v} must be finite and ≥ 0"));
                }
                Ok(())
            }
        }
    }

    /// `‖ε_{i,k}‖`, the same for every agent.
    pub fn magnitude(&self, k: usize) -> f64 {
        match self {
            ErrorSpec::Zero => 0.0,
            ErrorSpec::Geometric { scale, ratio } => {
                scale * ratio.powi(k.min(i32::MAX as usize) as i32)
            }
            ErrorSpec::Power { scale, exponent } => scale * ((k + 1) as f64).powf(-exponent),
            ErrorSpec::Custom { norms } => norms.get(k).copied().unwrap_or(0.0),
        }
    }

    /// `Σ_k ‖ε_{i,k}‖` (infinite when the series diverges).
    pub fn norm_sum(&self) -> f64 {
        match self {
            ErrorSpec::Zero => 0.0,
            ErrorSpec::Geometric { scale, ratio } => {
                if *ratio < 1.0 {
                    scale / (1.0 - ratio)
                } else {
                    f64::INFINITY
                }
            }
            ErrorSpec::Power { scale, exponent } => {
                if *exponent > 1.0 {
                    scale * zeta(*exponent)
                } else {
                    f64::INFINITY
                }
            }
            ErrorSpec::Custom { norms } => norms.iter().sum(),
        }
    }

    /// `Σ_k √E‖ε_{i,k}‖²`. Magnitudes are deterministic, so this equals
    /// [`norm_sum`](Self::norm_sum).
    pub fn sqrt_expected_sum(&self) -> f64 {
        self.norm_sum()
    }

    pub fn is_summable(&self) -> bool {
        self.norm_sum().is_finite()
    }
}

/// Riemann zeta by Euler–Maclaurin with a 1000-term head.
fn zeta(q: f64) -> f64 {
    const N: f64 = 1000.0;
    let head: f64 = (1..1000).map(|n| (n as f64).powf(-q)).sum();
    head + N.powf(1.0 - q) / (q - 1.0) + 0.5 * N.powf(-q) + q * N.powf(-q - 1.0) / 12.0
}

/// Emits `ε_{i,k}` with scheduled norm and uniformly random direction from
/// one stream per agent.
#[derive(Debug, Clone)]
pub struct ErrorModel {
    spec: ErrorSpec,
    rngs: Vec<StreamRng>,
}

impl ErrorModel {
    pub fn new(spec: ErrorSpec, seed: u64, agents: usize) -> Result<Self> {
        spec.validate()?;
        let rngs = (0..agents)
            .map(|i| seeds::stream(seed, &format!("errors/agent/{i}")))
            .collect();
        Ok(Self { spec, rngs })
    }

    pub fn spec(&self) -> &ErrorSpec {
        &self.spec
    }

    /// `ε_{i,k}`. Zero magnitudes do not advance the stream.
    pub fn draw(&mut self, i: usize, k: usize, layout: &Arc<BlockLayout>) -> Point {
        let m = self.spec.magnitude(k);
        if m == 0.0 {
            return Point::zeros(Arc::clone(layout));
        }
        let rng = &mut self.rngs[i];
        let n = layout.dim();
        loop {
            let dir: Vec<f64> = (0..n)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                let coords = dir.into_iter().map(|v| m * v / norm).collect();
                return Point::from_parts(coords, Arc::clone(layout));
            }
        }
    }
}
