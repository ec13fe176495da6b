use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{GraphSequence, ROW_SUM_TOLERANCE};

/// First rule broken by a graph sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub k: usize,
    pub rule: String,
    pub detail: String,
}

/// Outcome of checking connectivity and weight rules over a finite horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assumption1Report {
    pub passed: bool,
    pub window: usize,
    pub floor: f64,
    pub horizon: usize,
    pub violation: Option<Violation>,
}

/// Forward and reverse reachability from node 0 over the edge set
/// `{(j → i) : m[i][j] > 0}`.
pub fn is_strongly_connected(support: &DMatrix<bool>) -> bool {
    let n = support.nrows();
    if n <= 1 {
        return true;
    }
    let reach = |forward: bool| -> usize {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                // forward: u → v exists when v listens to u
                let edge = if forward {
                    support[(v, u)]
                } else {
                    support[(u, v)]
                };
                if edge && !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count
    };
    reach(true) == n && reach(false) == n
}

fn check_matrix(a: &DMatrix<f64>, n: usize, floor: f64) -> Option<(String, String)> {
    if a.nrows() != n || a.ncols() != n {
        return Some((
            "shape".into(),
            format!("{}x{} matrix for {n} agents", a.nrows(), a.ncols()),
        ));
    }
    for i in 0..n {
        let row = a.row(i);
        if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Some(("nonnegative".into(), format!("row {i} has entry {v}")));
        }
        let s = row.sum();
        if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Some(("row-stochastic".into(), format!("row {i} sums to {s}")));
        }
        if !(a[(i, i)] > 0.0) {
            return Some((
                "positive-diagonal".into(),
                format!("a_{i}{i} = {}", a[(i, i)]),
            ));
        }
        if let Some(v) = row.iter().find(|v| **v > 0.0 && **v < floor) {
            return Some((
                "weight-floor".into(),
                format!("row {i} has weight {v} < floor {floor}"),
            ));
        }
    }
    None
}

/// Verifies row-stochasticity, positive self-weights, the weight floor and
/// strong connectivity of every union `𝒢_{k+1} ∪ … ∪ 𝒢_{k+Q}` for
/// `k = 0..=horizon`.
pub fn check_assumption1(g: &GraphSequence, horizon: usize) -> Assumption1Report {
    let n = g.agents();
    let q = g.window();
    let floor = g.floor();
    let mut report = Assumption1Report {
        passed: true,
        window: q,
        floor,
        horizon,
        violation: None,
    };
    let fail = |report: &mut Assumption1Report, k: usize, rule: String, detail: String| {
        report.passed = false;
        report.violation = Some(Violation { k, rule, detail });
    };
    if horizon < q {
        fail(
            &mut report,
            0,
            "horizon".into(),
            format!("horizon {horizon} shorter than window {q}"),
        );
        return report;
    }
    let mats = g.prefix(horizon + q + 1);
    // report the earliest k at which any rule breaks
    for k in 0..=horizon {
        if let Some((rule, detail)) = check_matrix(&mats[k], n, floor) {
            fail(&mut report, k, rule, detail);
            return report;
        }
        let mut support = DMatrix::from_element(n, n, false);
        for a in &mats[k + 1..=k + q] {
            if let Some((rule, detail)) = check_matrix(a, n, floor) {
                fail(&mut report, k, rule, detail);
                return report;
            }
            for i in 0..n {
                for j in 0..n {
                    if a[(i, j)] > 0.0 {
                        support[(i, j)] = true;
                    }
                }
            }
        }
        if !is_strongly_connected(&support) {
            fail(
                &mut report,
                k,
                "joint-strong-connectivity".into(),
                format!(
                    "union of graphs {}..={} is not strongly connected",
                    k + 1,
                    k + q
                ),
            );
            return report;
        }
    }
    report
}
