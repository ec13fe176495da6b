//! Pre-run hypothesis checks: connectivity, regularity and step-size
//! admissibility, with every estimated constant reported.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{check_condition07, check_condition17, ConditionReport};
use crate::error::Result;
use crate::graph::{compute_mixing, uniform_horizon, Assumption1Report, MixingAnalysis};
use crate::operators::{estimate_regularity, RegularityEstimate};
use crate::scenarios::{RegularitySpec, Scenario};
use crate::seeds;

/// Estimated regularity constants above this are read as evidence that the
/// constant does not exist on the sampled ball.
pub const REGULARITY_CAP: f64 = 50.0;

/// Largest backward-product length tried when searching for contraction.
pub const MAX_HORIZON: usize = 1 << 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Unknown,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Unknown => "unknown",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

impl Hypothesis {
    fn new(name: &str, status: Status, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub scenario: String,
    pub agents: usize,
    pub validation_errors: Vec<String>,
    pub assumption1: Assumption1Report,
    pub hypotheses: Vec<Hypothesis>,
    pub mixing: Option<MixingAnalysis>,
    pub regularity: Option<RegularityEstimate>,
    pub conditions: Vec<ConditionReport>,
}

impl VerifyReport {
    /// Whether the scenario may be run at all.
    pub fn valid(&self) -> bool {
        self.validation_errors.is_empty()
    }

    pub fn hypothesis(&self, name: &str) -> Option<&Hypothesis> {
        self.hypotheses.iter().find(|h| h.name == name)
    }

    pub fn condition(&self, name: &str) -> Option<&ConditionReport> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

fn regularity_settings(sc: &Scenario) -> RegularitySpec {
    sc.spec.regularity.clone().unwrap_or(RegularitySpec {
        radius: 10.0,
        samples: 2000,
        seed: seeds::derive_seed(sc.seed(), "verify/regularity"),
    })
}

/// Mixing constants over the first few windows of the graph sequence.
pub fn analyse_mixing(sc: &Scenario) -> Result<MixingAnalysis> {
    let g = &sc.graph;
    let k_max = (4 * g.window()).max(g.period().unwrap_or(1));
    let horizon = uniform_horizon(g, 0..=k_max, MAX_HORIZON)?;
    compute_mixing(g, k_max, horizon)
}

/// Runs every check without iterating the engine. `regularity` may be
/// supplied to reuse an earlier estimate (it does not depend on the graph).
pub fn verify(sc: &mut Scenario, regularity: Option<RegularityEstimate>) -> Result<VerifyReport> {
    let validation = sc.validate(false)?;
    let mut hyps = Vec::new();
    let a1 = validation.assumption1.clone();
    hyps.push(Hypothesis::new(
        "assumption1",
        if a1.passed {
            Status::Pass
        } else {
            Status::Fail
        },
        match &a1.violation {
            None => format!(
                "Q = {}, a = {} over {} steps",
                a1.window, a1.floor, a1.horizon
            ),
            Some(v) => format!("{} at k = {}: {}", v.rule, v.k, v.detail),
        },
    ));

    let mixing = if a1.passed {
        analyse_mixing(sc).ok()
    } else {
        None
    };

    let regularity = match regularity {
        Some(r) => Some(r),
        None if sc.ops.common().is_some() => {
            let r = regularity_settings(sc);
            estimate_regularity(&sc.ops, r.radius, r.samples, r.seed).ok()
        }
        None => None,
    };

    let a2 = match (&validation.interior, &regularity) {
        (Some(true), _) => Hypothesis::new(
            "assumption2",
            Status::Pass,
            "projections onto sets with a common point interior to all but one",
        ),
        (_, Some(r)) => {
            let worst = r.kappa_c.max(r.kappa_0);
            let irregular: Vec<String> = r
                .kappa_i
                .iter()
                .enumerate()
                .filter(|(_, k)| **k > REGULARITY_CAP)
                .map(|(i, k)| {
                    format!("operator {i} not linearly regular (ratio {k:.3} > {REGULARITY_CAP})")
                })
                .collect();
            if worst <= REGULARITY_CAP {
                Hypothesis::new(
                    "assumption2",
                    Status::Pass,
                    format!("kappa_c = {:.6}, kappa_0 = {:.6}", r.kappa_c, r.kappa_0),
                )
            } else if irregular.is_empty() {
                Hypothesis::new(
                    "assumption2",
                    Status::Fail,
                    format!("fixed sets: kappa_0 = {:.6}", r.kappa_0),
                )
            } else {
                Hypothesis::new("assumption2", Status::Fail, irregular.join("; "))
            }
        }
        _ => Hypothesis::new(
            "assumption2",
            Status::Unknown,
            "no projector onto the common fixed set",
        ),
    };
    hyps.push(a2);

    hyps.push(match &regularity {
        Some(r) if r.nu <= REGULARITY_CAP => {
            Hypothesis::new("assumption3", Status::Pass, format!("nu = {:.6}", r.nu))
        }
        Some(r) => Hypothesis::new("assumption3", Status::Fail, format!("nu = {:.6}", r.nu)),
        None => Hypothesis::new(
            "assumption3",
            Status::Unknown,
            "no projector onto the common fixed set",
        ),
    });

    let mut conditions = Vec::new();
    if let (Some(m), Some(r)) = (&mixing, &regularity) {
        let n = sc.agents();
        if let Ok(c) = check_condition17(r, m, &sc.schedule, n) {
            conditions.push(c);
        }
        let (p0, blocks) = match &sc.spec.blocks {
            Some(b) => (b.probs.iter().copied().fold(1.0, f64::min), b.probs.len()),
            None => (1.0, 1),
        };
        if let Ok(c) = check_condition07(r.nu, m, &sc.schedule, n, p0, blocks) {
            conditions.push(c);
        }
    }

    Ok(VerifyReport {
        scenario: sc.name().to_string(),
        agents: sc.agents(),
        validation_errors: validation.errors.clone(),
        assumption1: a1,
        hypotheses: hyps,
        mixing,
        regularity,
        conditions,
    })
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario {} (N = {})", self.scenario, self.agents)?;
        for h in &self.hypotheses {
            writeln!(f, "  {:<12} {:<7} {}", h.name, h.status, h.detail)?;
        }
        match &self.mixing {
            Some(m) => writeln!(
                f,
                "  mixing       varpi = {:.6}, xi = {:.6}, pi_floor = {:.6} (bound {:.3e}), horizon {}",
                m.varpi, m.xi, m.pi_floor, m.pi_floor_bound, m.horizon
            )?,
            None => writeln!(f, "  mixing       not estimated")?,
        }
        if let Some(r) = &self.regularity {
            writeln!(
                f,
                "  regularity   kappa_c = {:.6}, kappa_0 = {:.6}, nu = {:.6} ({} samples, radius {})",
                r.kappa_c, r.kappa_0, r.nu, r.sample_count, r.sample_radius
            )?;
        }
        for c in &self.conditions {
            writeln!(
                f,
                "  {:<12} {:<7} alpha_c = {:.6}, bound = {:.6e}, margin = {:.6e}{}",
                c.name,
                if c.satisfied { "pass" } else { "fail" },
                c.alpha_c,
                c.bound,
                c.margin,
                c.gamma2
                    .map(|g| format!(", gamma2 = {g:.6e}"))
                    .unwrap_or_default()
            )?;
            if let Some(note) = &c.note {
                writeln!(f, "               {note}")?;
            }
        }
        for e in &self.validation_errors {
            writeln!(f, "  error        {e}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphSpec;
    use crate::scenarios::preset;

    #[test]
    fn two_halfspace_preset() {
        let mut sc = Scenario::build(preset("feasibility-2halfspace").unwrap()).unwrap();
        let r = verify(&mut sc, None).unwrap();
        assert!(r.valid());
        assert_eq!(r.hypothesis("assumption1").unwrap().status, Status::Pass);
        assert_eq!(r.hypothesis("assumption2").unwrap().status, Status::Pass);
        let c = r.condition("condition17").unwrap();
        assert!(c.margin.is_finite());
        assert!(r.condition("condition07").unwrap().note.is_some());
    }

    #[test]
    fn example1_reports_irregular_t1_and_power_regular_pair() {
        let mut sc = Scenario::build(preset("example1").unwrap()).unwrap();
        let r = verify(&mut sc, None).unwrap();
        let a2 = r.hypothesis("assumption2").unwrap();
        assert_eq!(a2.status, Status::Fail);
        assert!(a2.detail.contains("operator 0"), "{}", a2.detail);
        assert_eq!(r.hypothesis("assumption3").unwrap().status, Status::Pass);
        assert!(r.regularity.as_ref().unwrap().nu <= 2.0 + 1e-6);
    }

    #[test]
    fn disconnected_graph_fails_at_zero() {
        let mut spec = preset("feasibility-2halfspace").unwrap();
        spec.graph = GraphSpec::Edges {
            agents: 2,
            edges: vec![],
        };
        let mut sc = Scenario::build(spec).unwrap();
        let r = verify(&mut sc, None).unwrap();
        assert!(!r.valid());
        assert_eq!(r.hypothesis("assumption1").unwrap().status, Status::Fail);
        assert_eq!(r.assumption1.violation.as_ref().unwrap().k, 0);
        assert!(r.conditions.is_empty());
    }
}
