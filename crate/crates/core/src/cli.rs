//! Command-line front end: `run`, `verify`, `suite` and `export-graph`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::acceptance;
use crate::diagnostics::{write_plot_data, write_summary, write_trace_csv, RunSummary, TraceTable};
use crate::engine::{run, run_repeats, EngineKind, RunOptions};
use crate::error::{Error, Result};
use crate::graph::write_matrix_list;
use crate::lemmas::run_lemma_suite;
use crate::output::write_atomic;
use crate::scenarios::{preset, Scenario, ScenarioSpec};
use crate::verify::verify;

pub const EXIT_OK: u8 = 0;
/// Anything that is neither a usage, validation nor divergence failure
/// (I/O, failed suite members).
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_VALIDATION: u8 = 3;
pub const EXIT_DIVERGENCE: u8 = 4;

pub const DEFAULT_MAX_ITERS: usize = 100_000;
pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_OUT: &str = "fixnet-out";

#[derive(Debug, Parser)]
#[command(
    name = "fixnet",
    version,
    about = "Distributed inexact Krasnosel'skii-Mann iterations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write trace, summary and plot data.
    Run(Common),
    /// Check connectivity, regularity and step-size conditions without running.
    Verify(Common),
    /// Run a named check battery: `acceptance` or `lemmas`.
    Suite {
        name: String,
        #[command(flatten)]
        common: Common,
    },
    /// Write the first `--iters` mixing matrices of the scenario's graph.
    ExportGraph(Common),
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Use a bundled scenario instead of a config file.
    #[arg(long, value_name = "NAME", conflicts_with = "config")]
    pub preset: Option<String>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Master seed; overrides the config and `FIXNET_SEED`.
    #[arg(long, value_name = "U64", env = "FIXNET_SEED")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "N")]
    pub iters: Option<usize>,
    #[arg(long, value_name = "FLOAT")]
    pub tol: Option<f64>,
    #[arg(long, value_name = "N")]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub quiet: bool,
}

/// Where the scenario comes from: a preset with optional overrides of its
/// top-level fields, or a complete inline spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSource {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub overrides: Option<toml::Table>,
    #[serde(default)]
    pub spec: Option<ScenarioSpec>,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioSource,
    /// Defaults to `dibkm` with a block scheme, `km` with one agent, else `dikm`.
    #[serde(default)]
    pub engine: Option<EngineKind>,
    #[serde(default)]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub stop_tolerance: Option<f64>,
    #[serde(default)]
    pub repeat_count: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// A configuration with every default and command-line override applied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub spec: ScenarioSpec,
    pub engine: EngineKind,
    pub max_iters: usize,
    pub stop_tolerance: f64,
    pub repeat_count: usize,
    pub out: PathBuf,
}

/// Keys that select an enum variant; a table carrying one replaces the base
/// table instead of merging into it.
const TAGS: [&str; 3] = ["kind", "generator", "mode"];

fn merge(base: &mut toml::Table, over: &toml::Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o))
                if !TAGS.iter().any(|t| o.contains_key(*t)) =>
            {
                merge(b, o)
            }
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

impl ScenarioSource {
    pub fn resolve(&self) -> Result<ScenarioSpec> {
        match (&self.preset, &self.spec) {
            (Some(name), None) => {
                let spec = preset(name)?;
                let Some(over) = &self.overrides else {
                    return Ok(spec);
                };
                let mut table =
                    toml::Table::try_from(&spec).map_err(|e| Error::Config(e.to_string()))?;
                merge(&mut table, over);
                table
                    .try_into()
                    .map_err(|e: toml::de::Error| Error::Parse(format!("scenario overrides: {e}")))
            }
            (None, Some(spec)) if self.overrides.is_none() => Ok(spec.clone()),
            (None, Some(_)) => Err(Error::Config("overrides apply to presets only".into())),
            _ => Err(Error::Config(
                "scenario needs exactly one of `preset` or `spec`".into(),
            )),
        }
    }
}

impl RunConfig {
    pub fn from_preset(name: &str) -> Self {
        Self {
            scenario: ScenarioSource {
                preset: Some(name.into()),
                overrides: None,
                spec: None,
            },
            engine: None,
            max_iters: None,
            stop_tolerance: None,
            repeat_count: None,
            out: None,
            seed: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    /// Applies defaults, then `cli` overrides (flag, then environment, then file).
    pub fn resolve(&self, cli: &Common) -> Result<Resolved> {
        let mut spec = self.scenario.resolve()?;
        if let Some(seed) = cli.seed.or(self.seed) {
            spec.seed = seed;
        }
        let engine = self.engine.unwrap_or(if spec.blocks.is_some() {
            EngineKind::Dibkm
        } else if spec.operators.len() == 1 {
            EngineKind::Km
        } else {
            EngineKind::Dikm
        });
        let stop_tolerance = cli.tol.or(self.stop_tolerance).unwrap_or(DEFAULT_TOLERANCE);
        if !(stop_tolerance >= 0.0) {
            return Err(Error::Config(format!(
                "stop tolerance {stop_tolerance} must be >= 0"
            )));
        }
        let repeat_count = cli.repeats.or(self.repeat_count).unwrap_or(1);
        if repeat_count == 0 {
            return Err(Error::Config("repeat count must be at least 1".into()));
        }
        Ok(Resolved {
            spec,
            engine,
            max_iters: cli.iters.or(self.max_iters).unwrap_or(DEFAULT_MAX_ITERS),
            stop_tolerance,
            repeat_count,
            out: cli
                .out
                .clone()
                .or_else(|| self.out.clone())
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
        })
    }
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parse(_) => EXIT_USAGE,
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => EXIT_FAILURE,
        _ => EXIT_VALIDATION,
    }
}

fn load(common: &Common) -> Result<Resolved> {
    let cfg = match (&common.config, &common.preset) {
        (Some(p), _) => RunConfig::load(p)?,
        (None, Some(name)) => RunConfig::from_preset(name),
        (None, None) => {
            return Err(Error::Config(
                "one of --config or --preset is required".into(),
            ))
        }
    };
    cfg.resolve(common)
}

fn validated(spec: ScenarioSpec) -> Result<Scenario> {
    let mut sc = Scenario::build(spec)?;
    let report = sc.validate(false)?;
    if !report.passed() {
        return Err(Error::Validation(report.errors.join("; ")));
    }
    Ok(sc)
}

pub fn cmd_run(common: &Common) -> Result<u8> {
    let cfg = load(common)?;
    let sc = validated(cfg.spec.clone())?;
    let mut opts = RunOptions::new(cfg.engine, cfg.max_iters, cfg.stop_tolerance);
    opts.record_states = false;
    let traces = if cfg.repeat_count == 1 {
        vec![run(&sc, &opts)?]
    } else {
        run_repeats(&sc, &opts, cfg.repeat_count)?
    };
    let first = &traces[0];
    std::fs::create_dir_all(&cfg.out)?;
    write_trace_csv(&cfg.out.join("trace.csv"), first)?;
    write_plot_data(&cfg.out, first)?;
    let mut summary = RunSummary::from_trace(first);
    if traces.len() > 1 {
        let finals = TraceTable {
            columns: ["repetition", "iterations", "max_res", "max_cons"]
                .map(String::from)
                .to_vec(),
            rows: traces
                .iter()
                .enumerate()
                .map(|(r, t)| {
                    vec![
                        r as f64,
                        t.iterations() as f64,
                        t.last().max_residual,
                        t.last().max_consensus,
                    ]
                })
                .collect(),
        };
        write_atomic(&cfg.out.join("repeats.csv"), &finals.to_bytes(None)?)?;
        let r = traces.len() as f64;
        let res = traces.iter().map(|t| t.last().max_residual).sum::<f64>() / r;
        let cons = traces.iter().map(|t| t.last().max_consensus).sum::<f64>() / r;
        summary.extra.insert("repeats".into(), traces.len().into());
        let seeds: Vec<u64> = traces.iter().map(|t| t.seed).collect();
        summary.extra.insert("seeds".into(), seeds.into());
        summary
            .extra
            .insert("mean_final_max_residual".into(), res.into());
        summary
            .extra
            .insert("mean_final_max_consensus".into(), cons.into());
    }
    write_summary(&cfg.out.join("summary.json"), &summary)?;
    if !common.quiet {
        println!(
            "{} {}: {} after {} iterations, max residual {:.3e}, max consensus {:.3e} -> {}",
            summary.scenario,
            summary.engine,
            summary.stop_reason,
            summary.iterations,
            summary.final_max_residual,
            summary.final_max_consensus,
            cfg.out.display()
        );
    }
    Ok(EXIT_OK)
}

pub fn cmd_verify(common: &Common) -> Result<u8> {
    let cfg = load(common)?;
    let mut sc = Scenario::build(cfg.spec)?;
    let report = verify(&mut sc, None)?;
    if !common.quiet {
        print!("{report}");
    }
    if let Some(dir) = &common.out {
        let mut bytes = serde_json::to_vec_pretty(&report)?;
        bytes.push(b'\n');
        write_atomic(&dir.join("verify.json"), &bytes)?;
    }
    if report.valid() {
        Ok(EXIT_OK)
    } else {
        Err(Error::Validation(report.validation_errors.join("; ")))
    }
}

pub fn cmd_suite(name: &str, common: &Common) -> Result<u8> {
    let (text, failed) = match name {
        "acceptance" => {
            let mut rows = Vec::new();
            for (id, _) in acceptance::CRITERIA {
                let c = acceptance::run_criterion(id)?;
                if !common.quiet {
                    println!("{c}");
                }
                rows.push(c);
            }
            let failed = rows.iter().any(|c| c.outcome == acceptance::Outcome::Fail);
            (acceptance::table(&rows), failed)
        }
        "lemmas" => {
            let seed = common.seed.unwrap_or(2024);
            let reports = run_lemma_suite(seed)?;
            let mut text = String::new();
            for r in &reports {
                let line = format!(
                    "{:<30} {} {:>6} samples, {} violations, worst margin {:.3e}",
                    r.name,
                    if r.passed() { "PASS" } else { "FAIL" },
                    r.samples,
                    r.violations,
                    r.worst_margin
                );
                if !common.quiet {
                    println!("{line}");
                }
                text.push_str(&line);
                text.push('\n');
            }
            (text, reports.iter().any(|r| !r.passed()))
        }
        other => {
            return Err(Error::Config(format!(
                "unknown suite `{other}` (expected `acceptance` or `lemmas`)"
            )))
        }
    };
    if let Some(dir) = &common.out {
        write_atomic(&dir.join(format!("suite-{name}.txt")), text.as_bytes())?;
    }
    Ok(if failed { EXIT_FAILURE } else { EXIT_OK })
}

pub fn cmd_export_graph(common: &Common) -> Result<u8> {
    let cfg = load(common)?;
    let sc = Scenario::build(cfg.spec)?;
    let count = common
        .iters
        .unwrap_or_else(|| sc.graph.period().unwrap_or(1).max(sc.graph.window()));
    let path = cfg.out.join("graph.txt");
    write_matrix_list(&path, &sc.graph, count)?;
    if !common.quiet {
        println!("{count} matrices -> {}", path.display());
    }
    Ok(EXIT_OK)
}

/// Parses `args` (including the program name) and dispatches.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Verify(c) => cmd_verify(c),
        Command::Suite { name, common } => cmd_suite(name, common),
        Command::ExportGraph(c) => cmd_export_graph(c),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("fixnet: {e}");
            exit_code(&e)
        }
    }
}

pub fn main() -> ExitCode {
    ExitCode::from(main_with(std::env::args_os()))
}
