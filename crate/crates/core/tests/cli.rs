use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn aggsync(args: &[&str], root: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_aggsync"));
    cmd.args(args);
    match root {
        Some(r) => cmd.env("AGGSYNC_OUTPUT_ROOT", r),
        None => cmd.env_remove("AGGSYNC_OUTPUT_ROOT"),
    };
    cmd.output().unwrap()
}

fn error_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

const SMALL: &str = r#"
name = "small"
solver = "particles"
t_final = 2.0
output_dir = "runs/small"

[params]
chi1 = 10.0
chi2 = 1.0

[[initial.clusters]]
position = -0.3
m1 = 1.0
m2 = 0.0

[[initial.clusters]]
position = 0.2
m1 = 0.0
m2 = 1.0
"#;

#[test]
fn preset_run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("ex1");
    let out = aggsync(&["preset", "example1", "--solver", "particles", "--output", run_dir.to_str().unwrap()], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["report.json", "scenario.toml", "sync_analysis.txt", "particles/trajectory.csv", "particles/events.json"] {
        assert!(run_dir.join(f).is_file(), "missing {f}");
    }
    let rep = aggsync(&["report", run_dir.to_str().unwrap()], None);
    assert!(rep.status.success());
    let text = String::from_utf8(rep.stdout).unwrap();
    assert!(text.contains("LHS = |(χ₁ − χ₂)γ|"), "{text}");
    assert!(text.contains("decision: synchronise"), "{text}");
    assert_eq!(text, fs::read_to_string(run_dir.join("sync_analysis.txt")).unwrap());
}

#[test]
fn scenario_file_honours_output_root() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let out = aggsync(&["run", cfg.to_str().unwrap()], Some(root.path()));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run_dir = root.path().join("runs/small");
    assert!(run_dir.join("report.json").is_file());
    // the echoed scenario reproduces the run
    let again = root.path().join("again");
    let out = aggsync(
        &["run", run_dir.join("scenario.toml").to_str().unwrap(), "--output", again.to_str().unwrap()],
        None,
    );
    assert!(out.status.success());
    assert_eq!(
        fs::read(run_dir.join("particles/events.json")).unwrap(),
        fs::read(again.join("particles/events.json")).unwrap()
    );
}

#[test]
fn bad_configs_report_json_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("nested.toml", "preset = \"example1\"\n[grid]\nspacing = 1e-3\n", "config", "grid.spacing"),
        ("top.toml", "preset = \"example1\"\ncolour = 3\n", "config", "colour"),
        ("safety.toml", "preset = \"example1\"\n[fv]\nsafety = 1.5\n", "validation", "fv.safety"),
        ("solver.toml", "preset = \"example1\"\nsolver = \"spectral\"\n", "config", "solver"),
        ("chi.toml", "[params]\nchi2 = 1.0\n[[initial.clusters]]\nposition = 0.0\nm1 = 1.0\nm2 = 0.0\n", "config", "params.chi1"),
    ];
    for (file, text, kind, key) in cases {
        let path = dir.path().join(file);
        fs::write(&path, text).unwrap();
        let out = aggsync(&["run", path.to_str().unwrap(), "--output", dir.path().join("o").to_str().unwrap()], None);
        assert_eq!(out.status.code(), Some(1), "{file}");
        let v = error_json(&out);
        assert_eq!(v["error"], kind, "{file}: {v}");
        assert_eq!(v["key"], key, "{file}: {v}");
        assert!(v["message"].as_str().unwrap().contains(file), "{file}: {v}");
    }
}

#[test]
fn missing_file_and_usage_errors() {
    let out = aggsync(&["run", "/nonexistent/scenario.toml"], None);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"], "io");

    let out = aggsync(&["preset", "example9"], None);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["key"], "preset");

    let out = aggsync(&["frobnicate"], None);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "usage");
}

#[test]
fn limit_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("hl.toml");
    fs::write(&cfg, "preset = \"hydro_limit\"\nt_final = 0.1\n[grid]\ndx = 1e-2\n[kinetic]\nepsilon = [0.5, 0.05]\n").unwrap();
    let out = aggsync(&["limit", cfg.to_str().unwrap(), "--output", dir.path().to_str().unwrap()], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rd = csv::Reader::from_path(dir.path().join("limit.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    let w = |r: &csv::StringRecord| r[1].parse::<f64>().unwrap();
    assert!(w(&rows[1]) < w(&rows[0]));
}
