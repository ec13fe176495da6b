//! Time-varying directed communication graphs.
//!
//! A [`GraphSequence`] yields one row-stochastic weight matrix `A_k` per
//! iteration. Entry `a_{ij,k} > 0` means agent `i` hears agent `j` at time
//! `k`; every agent always hears itself. Each generator declares the window
//! `Q` over which the union graph is strongly connected and the weight floor
//! `a̲` below which no nonzero weight falls.

mod assumption;
mod io;
mod mixing;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;

pub use assumption::{check_assumption1, is_strongly_connected, Assumption1Report, Violation};
pub use io::{read_matrix_list, write_matrix_list, MATRIX_LIST_HEADER};
pub(crate) use mixing::least_squares;
pub use mixing::{
    absorption_sequence, backward_product, compute_mixing, contraction_horizon,
    stationarity_defect, uniform_horizon, MixingAnalysis, FIT_FLOOR,
};

/// Tolerance for row sums of weight matrices.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Directed edge `from → to` (information flows from `from` to `to`).
pub type Edge = (usize, usize);

/// Serializable description of a graph sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    /// Static complete graph with equal weights `1/N`.
    Complete { agents: usize },
    /// Static `(1 − δ)·J/N + δ·I`; mixes at rate exactly `δ`.
    LazyComplete { agents: usize, laziness: f64 },
    /// Static graph given by an edge list, uniform weights over each row's support.
    Edges { agents: usize, edges: Vec<Edge> },
    /// Static explicit weight matrix.
    StaticMatrix { matrix: Vec<Vec<f64>> },
    /// At time `k` the single edge `k mod N → (k + 1) mod N` plus self-loops.
    RotatingRing { agents: usize },
    /// Explicit periodic list of weight matrices.
    Periodic { matrices: Vec<Vec<Vec<f64>>> },
    /// Each epoch draws a random permutation of the template pool; one
    /// template per step. Default pool: the single ring edges.
    RandomPool {
        agents: usize,
        #[serde(default)]
        templates: Option<Vec<Vec<Edge>>>,
        seed: u64,
    },
}

#[derive(Debug, Clone)]
enum Generator {
    Static(DMatrix<f64>),
    Periodic(Vec<DMatrix<f64>>),
    RandomPool {
        templates: Vec<DMatrix<f64>>,
        seed: u64,
    },
}

/// A generated sequence `A_0, A_1, …` with its declared `(Q, a̲)`.
#[derive(Debug, Clone)]
pub struct GraphSequence {
    agents: usize,
    window: usize,
    floor: f64,
    generator: Generator,
    spec: GraphSpec,
}

/// Weight matrix with uniform weights over each row's support (self-loop included).
pub fn uniform_weights(agents: usize, edges: &[Edge]) -> Result<DMatrix<f64>> {
    let mut support = DMatrix::<f64>::identity(agents, agents);
    for &(from, to) in edges {
        if from >= agents || to >= agents {
            return Err(Error::InvalidParameter(format!(
                "edge ({from}, {to}) out of range for {agents} agents"
            )));
        }
        support[(to, from)] = 1.0;
    }
    for i in 0..agents {
        let deg: f64 = support.row(i).sum();
        for j in 0..agents {
            support[(i, j)] /= deg;
        }
    }
    Ok(support)
}

fn min_positive(m: &DMatrix<f64>) -> f64 {
    m.iter()
        .copied()
        .filter(|v| *v > 0.0)
        .fold(f64::INFINITY, f64::min)
}

impl GraphSequence {
    pub fn from_spec(spec: &GraphSpec) -> Result<Self> {
        let check_agents = |n: usize| {
            if n == 0 {
                Err(Error::InvalidParameter(
                    "graph needs at least one agent".into(),
                ))
            } else {
                Ok(n)
            }
        };
        let (agents, window, generator) = match spec {
            GraphSpec::Complete { agents } => {
                let n = check_agents(*agents)?;
                let m = DMatrix::from_element(n, n, 1.0 / n as f64);
                (n, 1, Generator::Static(m))
            }
            GraphSpec::LazyComplete { agents, laziness } => {
                let n = check_agents(*agents)?;
                if !(0.0..1.0).contains(laziness) {
                    return Err(Error::InvalidParameter(format!(
                        "laziness {laziness} outside [0, 1)"
                    )));
                }
                let d = *laziness;
                let m = DMatrix::from_fn(n, n, |i, j| {
                    (1.0 - d) / n as f64 + if i == j { d } else { 0.0 }
                });
                (n, 1, Generator::Static(m))
            }
            GraphSpec::Edges { agents, edges } => {
                let n = check_agents(*agents)?;
                (n, 1, Generator::Static(uniform_weights(n, edges)?))
            }
            GraphSpec::StaticMatrix { matrix } => {
                let m = crate::operators::matrix_from_rows(matrix)?;
                if !m.is_square() {
                    return Err(Error::InvalidParameter(
                        "weight matrix must be square".into(),
                    ));
                }
                (m.nrows(), 1, Generator::Static(m))
            }
            GraphSpec::RotatingRing { agents } => {
                let n = check_agents(*agents)?;
                let mats = (0..n)
                    .map(|k| {
                        if n == 1 {
                            uniform_weights(1, &[])
                        } else {
                            uniform_weights(n, &[(k % n, (k + 1) % n)])
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                (n, n, Generator::Periodic(mats))
            }
            GraphSpec::Periodic { matrices } => {
                if matrices.is_empty() {
                    return Err(Error::InvalidParameter("periodic sequence is empty".into()));
                }
                let mats = matrices
                    .iter()
                    .map(|m| crate::operators::matrix_from_rows(m))
                    .collect::<Result<Vec<_>>>()?;
                let n = mats[0].nrows();
                if mats.iter().any(|m| m.nrows() != n || m.ncols() != n) {
                    return Err(Error::InvalidParameter(
                        "periodic matrices differ in size".into(),
                    ));
                }
                (n, mats.len(), Generator::Periodic(mats))
            }
            GraphSpec::RandomPool {
                agents,
                templates,
                seed,
            } => {
                let n = check_agents(*agents)?;
                let pool: Vec<Vec<Edge>> = match templates {
                    Some(t) if !t.is_empty() => t.clone(),
                    Some(_) => return Err(Error::InvalidParameter("empty template pool".into())),
                    None => (0..n).map(|j| vec![(j, (j + 1) % n)]).collect(),
                };
                let mats = pool
                    .iter()
                    .map(|e| uniform_weights(n, e))
                    .collect::<Result<Vec<_>>>()?;
                // any window of 2P − 1 consecutive steps covers a full epoch
                let w = 2 * mats.len() - 1;
                (
                    n,
                    w,
                    Generator::RandomPool {
                        templates: mats,
                        seed: *seed,
                    },
                )
            }
        };
        let floor = match &generator {
            Generator::Static(m) => min_positive(m),
            Generator::Periodic(v) | Generator::RandomPool { templates: v, .. } => {
                v.iter().map(min_positive).fold(f64::INFINITY, f64::min)
            }
        };
        Ok(Self {
            agents,
            window,
            floor,
            generator,
            spec: spec.clone(),
        })
    }

    pub fn spec(&self) -> &GraphSpec {
        &self.spec
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    /// Declared connectivity window `Q`.
    pub fn window(&self) -> usize {
        self.window
    }

    /// Declared weight floor `a̲`.
    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// Period of the sequence, if it is periodic (static sequences have period 1).
    pub fn period(&self) -> Option<usize> {
        match &self.generator {
            Generator::Static(_) => Some(1),
            Generator::Periodic(v) => Some(v.len()),
            Generator::RandomPool { .. } => None,
        }
    }

    /// `A_k`.
    pub fn matrix(&self, k: usize) -> DMatrix<f64> {
        match &self.generator {
            Generator::Static(m) => m.clone(),
            Generator::Periodic(v) => v[k % v.len()].clone(),
            Generator::RandomPool { templates, seed } => {
                let p = templates.len();
                let epoch = k / p;
                let mut order: Vec<usize> = (0..p).collect();
                let mut rng = seeds::stream(*seed, &format!("graph/epoch/{epoch}"));
                order.shuffle(&mut rng);
                templates[order[k % p]].clone()
            }
        }
    }

    /// `A_0, …, A_{count−1}`.
    pub fn prefix(&self, count: usize) -> Vec<DMatrix<f64>> {
        (0..count).map(|k| self.matrix(k)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_weights_rows_sum_to_one() {
        let m = uniform_weights(3, &[(0, 1), (2, 1)]).unwrap();
        assert_eq!(
            m.row(1).iter().copied().collect::<Vec<_>>(),
            vec![1.0 / 3.0; 3]
        );
        assert_eq!(m[(0, 0)], 1.0);
        assert!(uniform_weights(2, &[(0, 5)]).is_err());
    }

    #[test]
    fn rotating_ring_matrices() {
        let g = GraphSequence::from_spec(&GraphSpec::RotatingRing { agents: 3 }).unwrap();
        assert_eq!(g.window(), 3);
        assert_eq!(g.floor(), 0.5);
        let a0 = g.matrix(0);
        assert_eq!(a0[(1, 0)], 0.5);
        assert_eq!(a0[(1, 1)], 0.5);
        assert_eq!(a0[(0, 0)], 1.0);
        assert_eq!(g.matrix(3), a0);
    }

    #[test]
    fn lazy_complete_is_row_stochastic() {
        let g = GraphSequence::from_spec(&GraphSpec::LazyComplete {
            agents: 4,
            laziness: 0.2,
        })
        .unwrap();
        let a = g.matrix(0);
        for i in 0..4 {
            assert!((a.row(i).sum() - 1.0).abs() < 1e-15);
        }
        assert!((a[(0, 0)] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn random_pool_is_deterministic_and_covers_epochs() {
        let spec = GraphSpec::RandomPool {
            agents: 4,
            templates: None,
            seed: 11,
        };
        let g1 = GraphSequence::from_spec(&spec).unwrap();
        let g2 = GraphSequence::from_spec(&spec).unwrap();
        assert_eq!(g1.window(), 7);
        for k in 0..40 {
            assert_eq!(g1.matrix(k), g2.matrix(k));
        }
        // each epoch uses every template once
        let epoch: Vec<_> = (4..8).map(|k| g1.matrix(k)).collect();
        for t in 0..4 {
            let m = uniform_weights(4, &[(t, (t + 1) % 4)]).unwrap();
            assert!(epoch.contains(&m));
        }
    }
}
