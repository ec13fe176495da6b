use std::path::Path;
use std::process::{Command, Output};

use fixnet::diagnostics::{read_summary, read_table, read_trace_csv, TRACE_HEADER};
use fixnet::graph::{read_matrix_list, GraphSequence, GraphSpec};

fn fixnet(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fixnet"))
        .args(args)
        .current_dir(dir)
        .env_remove("FIXNET_SEED")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

#[test]
fn run_preset_converges_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = fixnet(
        &[
            "run",
            "--preset",
            "feasibility-2halfspace",
            "--out",
            "out",
            "--quiet",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    let summary = read_summary(&out.join("summary.json")).unwrap();
    assert_eq!(summary.stop_reason, "converged");
    let text = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(text.lines().next(), Some(TRACE_HEADER));
    let table = read_trace_csv(&out.join("trace.csv")).unwrap();
    assert_eq!(table.rows.len(), summary.iterations + 1);
    for f in ["residual_loglog.csv", "consensus.csv", "distance_sq.csv"] {
        let (_, t) = read_table(&out.join(f)).unwrap();
        assert!(!t.rows.is_empty(), "{f}");
    }
}

#[test]
fn identical_configs_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.toml",
        r#"
engine = "dibkm"
max_iters = 400
stop_tolerance = 0.0
seed = 77

[scenario]
preset = "feasibility-blocks"
"#,
    );
    for out in ["a", "b"] {
        let o = fixnet(
            &["run", "--config", &cfg, "--out", out, "--quiet"],
            dir.path(),
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in [
        "trace.csv",
        "summary.json",
        "residual_loglog.csv",
        "consensus.csv",
        "distance_sq.csv",
    ] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn seed_precedence_flag_over_env_over_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.toml",
        "max_iters = 5\nseed = 3\n[scenario]\npreset = \"feasibility-blocks\"\n",
    );
    let seed_of = |out: &str| {
        read_summary(&dir.path().join(out).join("summary.json"))
            .unwrap()
            .seed
    };
    let o = fixnet(
        &["run", "--config", &cfg, "--out", "file", "--quiet"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    assert_eq!(seed_of("file"), 3);
    let o = Command::new(env!("CARGO_BIN_EXE_fixnet"))
        .args(["run", "--config", &cfg, "--out", "env", "--quiet"])
        .current_dir(dir.path())
        .env("FIXNET_SEED", "11")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(seed_of("env"), 11);
    let o = Command::new(env!("CARGO_BIN_EXE_fixnet"))
        .args([
            "run", "--config", &cfg, "--out", "flag", "--seed", "12", "--quiet",
        ])
        .current_dir(dir.path())
        .env("FIXNET_SEED", "11")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(seed_of("flag"), 12);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&fixnet(&["frobnicate"], dir.path())), 2);
    assert_eq!(code(&fixnet(&["run"], dir.path())), 2);
    assert_eq!(
        code(&fixnet(
            &["run", "--preset", "x", "--iters", "ten"],
            dir.path()
        )),
        2
    );
    assert_eq!(code(&fixnet(&["suite", "everything"], dir.path())), 2);
    assert_eq!(
        code(&fixnet(&["run", "--config", "missing.toml"], dir.path())),
        2
    );
    let typo = write(
        dir.path(),
        "typo.toml",
        "max_iter = 3\n[scenario]\npreset = \"linear-3x3\"\n",
    );
    let o = fixnet(&["run", "--config", &typo], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("max_iter"));
    let bad = write(dir.path(), "bad.toml", "[scenario\n");
    assert_eq!(code(&fixnet(&["verify", "--config", &bad], dir.path())), 2);
}

#[test]
fn validation_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let floor = write(
        dir.path(),
        "floor.toml",
        r#"
[scenario]
preset = "feasibility-2halfspace"
[scenario.overrides.schedule]
kind = "constant"
alpha = 0.5
floor = 0.7
"#,
    );
    let o = fixnet(&["run", "--config", &floor, "--quiet"], dir.path());
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("(0, 1/2]"));

    let km = write(
        dir.path(),
        "km.toml",
        "engine = \"km\"\n[scenario]\npreset = \"feasibility-2halfspace\"\n",
    );
    assert_eq!(
        code(&fixnet(&["run", "--config", &km, "--quiet"], dir.path())),
        3
    );

    let cut = write(
        dir.path(),
        "cut.toml",
        r#"
[scenario]
preset = "feasibility-2halfspace"
[scenario.overrides.graph]
generator = "edges"
agents = 2
edges = []
"#,
    );
    let o = fixnet(&["verify", "--config", &cut], dir.path());
    assert_eq!(code(&o), 3);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("assumption1  fail"), "{stdout}");
    assert!(stdout.contains("k = 0"), "{stdout}");
}

#[test]
fn divergence_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "blow.toml",
        r#"
[scenario]
preset = "feasibility-2halfspace"
[scenario.overrides.errors]
kind = "custom"
norms = [1e14]
"#,
    );
    let o = fixnet(&["run", "--config", &cfg, "--quiet"], dir.path());
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn verify_reports_constants() {
    let dir = tempfile::tempdir().unwrap();
    let o = fixnet(
        &["verify", "--preset", "feasibility-2halfspace", "--out", "v"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let s = String::from_utf8_lossy(&o.stdout);
    for needle in [
        "assumption1  pass",
        "assumption2  pass",
        "assumption3  pass",
        "condition17",
        "condition07",
        "xi =",
        "kappa_0",
        "nu =",
    ] {
        assert!(s.contains(needle), "missing {needle} in\n{s}");
    }
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("v/verify.json")).unwrap()).unwrap();
    assert!(json["conditions"][0]["margin"].is_number());

    let o = fixnet(&["verify", "--preset", "example1"], dir.path());
    let s = String::from_utf8_lossy(&o.stdout);
    assert!(
        s.contains("assumption2  fail    operator 0 not linearly regular"),
        "{s}"
    );
    assert!(s.contains("assumption3  pass"), "{s}");
}

#[test]
fn export_graph_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = fixnet(
        &[
            "export-graph",
            "--preset",
            "linear-3x3",
            "--iters",
            "7",
            "--out",
            "g",
            "--quiet",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let mats = read_matrix_list(&dir.path().join("g/graph.txt")).unwrap();
    let g = GraphSequence::from_spec(&GraphSpec::RotatingRing { agents: 3 }).unwrap();
    assert_eq!(mats.len(), 7);
    for (k, m) in mats {
        assert_eq!(m, g.matrix(k));
    }
}

#[test]
fn repeats_write_per_run_finals() {
    let dir = tempfile::tempdir().unwrap();
    let o = fixnet(
        &[
            "run",
            "--preset",
            "feasibility-blocks",
            "--repeats",
            "4",
            "--out",
            "r",
            "--quiet",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let (_, t) = read_table(&dir.path().join("r/repeats.csv")).unwrap();
    assert_eq!(t.rows.len(), 4);
    let s = read_summary(&dir.path().join("r/summary.json")).unwrap();
    assert_eq!(s.extra["repeats"], 4);
}

#[test]
fn lemma_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = fixnet(&["suite", "lemmas", "--out", "s"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let text = std::fs::read_to_string(dir.path().join("s/suite-lemmas.txt")).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(!text.contains("FAIL"));
}

#[test]
fn plot_files_cover_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = fixnet(
        &[
            "run",
            "--preset",
            "linear-3x3",
            "--out",
            "p",
            "--iters",
            "300",
            "--quiet",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let p = dir.path().join("p");
    let trace = read_trace_csv(&p.join("trace.csv")).unwrap();
    let (_, cons) = read_table(&p.join("consensus.csv")).unwrap();
    assert_eq!(cons.rows.len(), trace.rows.len());
    let (_, ll) = read_table(&p.join("residual_loglog.csv")).unwrap();
    assert_eq!(ll.rows[0][0], 1.0);
    assert_eq!(ll.rows.len(), trace.rows.len() - 1);
}
