//! Trace, summary and plot-data files. Floats are written in Rust's shortest
//! round-trip form, so every value reads back bit-for-bit.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{running_min, RateCertificate, RunTrace};
use crate::error::{Error, Result};
use crate::output::write_atomic;

/// First line of every trace file; bumped when the column layout changes.
pub const TRACE_HEADER: &str = "# fixnet trace v1";

pub const PLOT_FILES: [&str; 3] = ["residual_loglog.csv", "consensus.csv", "distance_sq.csv"];

/// Named numeric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TraceTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    /// Column order: `k`, `res_i`, `cons_i`, `dist_i` (with a projector),
    /// `err_i`, `d2` (with a projector), `max_res`, `wd2` (block runs).
    pub fn from_trace(trace: &RunTrace) -> Self {
        let n = trace.agents;
        let has_dist = trace.records[0].distances.is_some();
        let has_wd2 = trace.records[0].weighted_d2.is_some();
        let mut columns = vec!["k".to_string()];
        let mut per_agent = |prefix: &str| columns.extend((0..n).map(|i| format!("{prefix}_{i}")));
        per_agent("res");
        per_agent("cons");
        if has_dist {
            per_agent("dist");
        }
        per_agent("err");
        if has_dist {
            columns.push("d2".into());
        }
        columns.push("max_res".into());
        if has_wd2 {
            columns.push("wd2".into());
        }
        let rows = trace
            .records
            .iter()
            .map(|r| {
                let mut row = vec![r.k as f64];
                row.extend(&r.residuals);
                row.extend(&r.consensus);
                if let Some(d) = &r.distances {
                    row.extend(d);
                }
                row.extend(&r.error_norms);
                if let Some(d2) = r.d2 {
                    row.push(d2);
                }
                row.push(r.max_residual);
                if let Some(w) = r.weighted_d2 {
                    row.push(w);
                }
                row
            })
            .collect();
        Self { columns, rows }
    }

    pub fn to_bytes(&self, comment: Option<&str>) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        if let Some(c) = comment {
            writeln!(buf, "{c}")?;
        }
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(&self.columns)?;
            for row in &self.rows {
                w.write_record(row.iter().map(|v| cell(*v)))?;
            }
            w.flush()?;
        }
        Ok(buf)
    }
}

/// Integral values print without a fraction; everything else in the
/// shortest form that parses back to the same bits.
fn cell(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

pub fn write_trace_csv(path: &Path, trace: &RunTrace) -> Result<()> {
    write_atomic(
        path,
        &TraceTable::from_trace(trace).to_bytes(Some(TRACE_HEADER))?,
    )
}

/// Reads a delimited numeric table, skipping a leading `#` comment line.
/// Returns the comment, if any.
pub fn read_table(path: &Path) -> Result<(Option<String>, TraceTable)> {
    let mut reader = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let (comment, rest) = if first.starts_with('#') {
        (Some(first.trim_end().to_string()), String::new())
    } else {
        (None, first)
    };
    let mut body = rest;
    std::io::Read::read_to_string(&mut reader, &mut body)?;
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let columns: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("{}: bad number {f:?}", path.display())))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((comment, TraceTable { columns, rows }))
}

/// Reads a trace file, checking its version line.
pub fn read_trace_csv(path: &Path) -> Result<TraceTable> {
    let (comment, table) = read_table(path)?;
    match comment.as_deref() {
        Some(TRACE_HEADER) => Ok(table),
        other => Err(Error::Parse(format!("unexpected trace header {other:?}"))),
    }
}

/// Run metadata and headline numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub engine: String,
    pub seed: u64,
    pub fingerprint: String,
    pub iterations: usize,
    pub stop_reason: String,
    pub final_max_residual: f64,
    pub final_max_consensus: f64,
    pub final_d2: Option<f64>,
    pub final_weighted_d2: Option<f64>,
    /// Fit of `max_i min_{l ≤ k} ‖F_i(x_{i,l}) − x_{i,l}‖` against the `k^(−1/2)` rate.
    pub running_min_rate: Option<RateCertificate>,
    /// `sup_{k ≥ 100} √k · max_i m_{i,k}`.
    pub sqrt_k_running_min_sup: Option<f64>,
    #[serde(default)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl RunSummary {
    pub fn from_trace(trace: &RunTrace) -> Self {
        let n = trace.agents;
        let mins: Vec<Vec<f64>> = (0..n)
            .map(|i| running_min(&trace.residual_series(i)))
            .collect();
        let worst: Vec<f64> = (0..trace.records.len())
            .map(|k| mins.iter().map(|m| m[k]).fold(0.0, f64::max))
            .collect();
        let running_min_rate = super::fit_rate(&worst, 0.5, 0.5, super::RATE_SLACK).ok();
        let sqrt_k_running_min_sup = (worst.len() > 100).then(|| {
            worst
                .iter()
                .enumerate()
                .skip(100)
                .map(|(k, m)| (k as f64).sqrt() * m)
                .fold(0.0, f64::max)
        });
        let last = trace.last();
        Self {
            scenario: trace.scenario.clone(),
            engine: trace.engine.to_string(),
            seed: trace.seed,
            fingerprint: trace.fingerprint.clone(),
            iterations: trace.iterations(),
            stop_reason: trace.stop_reason.to_string(),
            final_max_residual: last.max_residual,
            final_max_consensus: last.max_consensus,
            final_d2: last.d2,
            final_weighted_d2: last.weighted_d2,
            running_min_rate,
            sqrt_k_running_min_sup,
            extra: BTreeMap::new(),
        }
    }
}

pub fn write_summary(path: &Path, summary: &RunSummary) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(summary)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_summary(path: &Path) -> Result<RunSummary> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

/// The plot-data tables with their file names; the distance table only when
/// the trace carries distances.
pub fn plot_tables(trace: &RunTrace) -> Vec<(&'static str, TraceTable)> {
    let res = trace.max_residual_series();
    let rmin = running_min(&res);
    let loglog = TraceTable {
        columns: ["k", "log10_k", "max_res", "log10_max_res", "running_min"]
            .map(String::from)
            .to_vec(),
        rows: res
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, r)| vec![k as f64, (k as f64).log10(), *r, r.log10(), rmin[k]])
            .collect(),
    };
    let cons = TraceTable {
        columns: vec!["k".into(), "max_consensus".into()],
        rows: trace
            .records
            .iter()
            .map(|r| vec![r.k as f64, r.max_consensus])
            .collect(),
    };
    let mut out = vec![(PLOT_FILES[0], loglog), (PLOT_FILES[1], cons)];
    if let Some(d2) = trace.d2_series() {
        out.push((
            PLOT_FILES[2],
            TraceTable {
                columns: vec!["k".into(), "d2".into()],
                rows: d2
                    .iter()
                    .enumerate()
                    .map(|(k, v)| vec![k as f64, *v])
                    .collect(),
            },
        ));
    }
    out
}

/// Writes the plot-data files into `dir`. Returns the paths written.
pub fn write_plot_data(dir: &Path, trace: &RunTrace) -> Result<Vec<std::path::PathBuf>> {
    let mut out = Vec::new();
    for (name, table) in plot_tables(trace) {
        let p = dir.join(name);
        write_atomic(&p, &table.to_bytes(None)?)?;
        out.push(p);
    }
    Ok(out)
}
