use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Serializable relaxation schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    /// `α_{i,k} = alpha`.
    Constant {
        alpha: f64,
        #[serde(default)]
        floor: Option<f64>,
    },
    /// `α_{i,k} = alphas[i]`.
    PerAgent {
        alphas: Vec<f64>,
        #[serde(default)]
        floor: Option<f64>,
    },
    /// `α_{i,k} = alphas[i][k mod len_i]`.
    Cyclic {
        alphas: Vec<Vec<f64>>,
        #[serde(default)]
        floor: Option<f64>,
    },
}

/// Relaxation parameters `α_{i,k}` with floor `α` and cap `α_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationSchedule {
    spec: ScheduleSpec,
    agents: usize,
    floor: f64,
    cap: f64,
}

impl RelaxationSchedule {
    /// Validates `α ∈ (0, 1/2]` and `α_{i,k} ∈ [α, 1 − α]` for every agent and step.
    pub fn new(spec: ScheduleSpec, agents: usize) -> Result<Self> {
        let (values, floor): (Vec<f64>, Option<f64>) = match &spec {
            ScheduleSpec::Constant { alpha, floor } => (vec![*alpha], *floor),
            ScheduleSpec::PerAgent { alphas, floor } => {
                if alphas.len() != agents {
                    return Err(Error::Validation(format!(
                        "schedule lists {} agents, network has {agents}",
                        alphas.len()
                    )));
                }
                (alphas.clone(), *floor)
            }
            ScheduleSpec::Cyclic { alphas, floor } => {
                if alphas.len() != agents {
                    return Err(Error::Validation(format!(
                        "schedule lists {} agents, network has {agents}",
                        alphas.len()
                    )));
                }
                if let Some(i) = alphas.iter().position(|a| a.is_empty()) {
                    return Err(Error::Validation(format!("agent {i} has an empty cycle")));
                }
                (alphas.iter().flatten().copied().collect(), *floor)
            }
        };
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let floor = floor.unwrap_or_else(|| lo.min(1.0 - hi));
        if !(floor > 0.0 && floor <= 0.5) {
            return Err(Error::Validation(format!(
                "relaxation floor α = {floor} outside (0, 1/2]; α_{{i,k}} must lie in [α, 1 − α]"
            )));
        }
        if let Some(a) = values
            .iter()
            .find(|a| !(**a >= floor && **a <= 1.0 - floor))
        {
            return Err(Error::Validation(format!(
                "relaxation parameter {a} outside [α, 1 − α] = [{floor}, {}]",
                1.0 - floor
            )));
        }
        Ok(Self {
            spec,
            agents,
            floor,
            cap: hi,
        })
    }

    pub fn spec(&self) -> &ScheduleSpec {
        &self.spec
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    /// `α`.
    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// `α_c = sup_{i,k} α_{i,k}`.
    pub fn cap(&self) -> f64 {
        self.cap
    }

    /// `α_{i,k}`.
    pub fn alpha(&self, i: usize, k: usize) -> f64 {
        match &self.spec {
            ScheduleSpec::Constant { alpha, .. } => *alpha,
            ScheduleSpec::PerAgent { alphas, .. } => alphas[i],
            ScheduleSpec::Cyclic { alphas, .. } => alphas[i][k % alphas[i].len()],
        }
    }

    /// `(α_{0,k}, …, α_{N−1,k})`.
    pub fn alphas(&self, k: usize) -> Vec<f64> {
        (0..self.agents).map(|i| self.alpha(i, k)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_floor_and_cap() {
        let s = RelaxationSchedule::new(
            ScheduleSpec::Cyclic {
                alphas: vec![vec![0.3, 0.6], vec![0.5]],
                floor: None,
            },
            2,
        )
        .unwrap();
        assert_eq!(s.floor(), 0.3);
        assert_eq!(s.cap(), 0.6);
        assert_eq!(s.alpha(0, 3), 0.6);
        assert_eq!(s.alpha(1, 3), 0.5);
    }

    #[test]
    fn rejects_bad_floor_and_values() {
        let c = |alpha, floor| RelaxationSchedule::new(ScheduleSpec::Constant { alpha, floor }, 1);
        assert!(c(0.5, Some(0.6)).is_err());
        assert!(c(0.0, None).is_err());
        assert!(c(1.0, None).is_err());
        assert!(c(0.8, Some(0.3)).is_err());
        assert!(c(0.7, None).is_ok());
        assert!(RelaxationSchedule::new(
            ScheduleSpec::PerAgent {
                alphas: vec![0.5],
                floor: None
            },
            2
        )
        .is_err());
    }
}
