use rand::Rng;

use crate::error::Result;
use crate::hilbert::WeightedNorm;
use crate::seeds::{self, StreamRng};

/// Random block activation: each `b_{il,k}` is an independent coin with
/// `P(1) = p_l`; an all-zero draw is discarded and redrawn.
#[derive(Debug, Clone)]
pub struct BlockScheme {
    norm: WeightedNorm,
    rngs: Vec<StreamRng>,
}

impl BlockScheme {
    pub fn new(probs: Vec<f64>, seed: u64, agents: usize) -> Result<Self> {
        let norm = WeightedNorm::new(probs)?;
        let rngs = (0..agents)
            .map(|i| seeds::stream(seed, &format!("activations/agent/{i}")))
            .collect();
        Ok(Self { norm, rngs })
    }

    pub fn probs(&self) -> &[f64] {
        self.norm.probs()
    }

    pub fn norm(&self) -> &WeightedNorm {
        &self.norm
    }

    pub fn num_blocks(&self) -> usize {
        self.norm.probs().len()
    }

    /// `b_{i,k}` for agent `i` at the next step.
    pub fn draw(&mut self, i: usize) -> Vec<bool> {
        let rng = &mut self.rngs[i];
        loop {
            let b: Vec<bool> = self
                .norm
                .probs()
                .iter()
                .map(|p| rng.random::<f64>() < *p)
                .collect();
            if b.iter().any(|v| *v) {
                return b;
            }
        }
    }

    /// Activation frequency of each block after rejection:
    /// `p_l / (1 − Π_j (1 − p_j))`.
    pub fn effective_probs(&self) -> Vec<f64> {
        let none: f64 = self.norm.probs().iter().map(|p| 1.0 - p).product();
        self.norm.probs().iter().map(|p| p / (1.0 - none)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn never_all_zero_and_frequencies_match() {
        let mut s = BlockScheme::new(vec![0.1, 0.2], 3, 1).unwrap();
        let eff = s.effective_probs();
        let n = 200_000;
        let mut counts = [0usize; 2];
        for _ in 0..n {
            let b = s.draw(0);
            assert!(b.iter().any(|v| *v));
            for l in 0..2 {
                counts[l] += b[l] as usize;
            }
        }
        for l in 0..2 {
            let f = counts[l] as f64 / n as f64;
            let se = (eff[l] * (1.0 - eff[l]) / n as f64).sqrt();
            assert!(
                (f - eff[l]).abs() < 5.0 * se,
                "block {l}: {f} vs {}",
                eff[l]
            );
        }
    }

    #[test]
    fn certain_blocks_always_fire() {
        let mut s = BlockScheme::new(vec![1.0, 1.0, 1.0], 9, 2).unwrap();
        for _ in 0..100 {
            assert_eq!(s.draw(1), vec![true; 3]);
        }
        assert!(BlockScheme::new(vec![0.0, 1.0], 1, 1).is_err());
    }
}
