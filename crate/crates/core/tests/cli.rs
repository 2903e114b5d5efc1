use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use netsync::config::Config;
use netsync::delay::{monodromy, KernelSet, MonodromyOperator};
use netsync::netsim::Subsystem;
use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn netsync(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netsync")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn analyze(path: &str) -> (i32, Value) {
    let out = netsync(&["analyze", "--config", path]);
    let code = out.status.code().unwrap();
    let json = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (code, json)
}

fn example(name: &str) -> String {
    configs().join(name).to_str().unwrap().to_string()
}

#[test]
fn complete_graph_of_integrators_synchronizes() {
    let (code, report) = analyze(&example("k4_integrators.json"));
    assert_eq!(code, 0);
    assert_eq!(report["verdict"], "synchronizes");
    let checks = report["per_lambda"].as_array().unwrap();
    assert_eq!(checks.len(), 1);
    assert_eq!(checks[0]["multiplicity"], 3);
    assert!((checks[0]["lambda"][0].as_f64().unwrap() + 4.0).abs() < 1e-9);
}

#[test]
fn single_node_has_nothing_to_synchronize() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(
        dir.path(),
        "one.json",
        r#"{"system": {"kind": "lti", "a": [[3]], "b": [[1]], "c": [[1]]}, "coupling": {"weights": [[0]]}}"#,
    );
    let (code, report) = analyze(&path);
    assert_eq!(code, 0);
    assert_eq!(report["verdict"], "synchronizes");
    assert!(report["per_lambda"].as_array().unwrap().is_empty());
}

#[test]
fn disconnected_unstable_pair_does_not_synchronize() {
    let (code, report) = analyze(&example("disconnected_pair.json"));
    assert_eq!(code, 1);
    assert_eq!(report["verdict"], "does_not_synchronize");
}

#[test]
fn output_stable_system_with_unstable_state() {
    let (code, report) = analyze(&example("output_vs_state.json"));
    assert_eq!((code, report["verdict"].as_str()), (0, Some("stable")));
    let text = std::fs::read_to_string(example("output_vs_state.json")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let state = text.replace(r#""criterion": "stability""#, r#""criterion": "stability", "state": true"#);
    let (code, report) = analyze(&write_config(dir.path(), "state.json", &state));
    assert_eq!((code, report["verdict"].as_str()), (1, Some("unstable")));
}

#[test]
fn hayes_equation_flips_at_quarter_turn() {
    let (code, report) = analyze(&example("hayes.json"));
    assert_eq!(code, 0);
    let rho = report["per_lambda"][0]["spectral_radius"].as_f64().unwrap();
    assert!(rho < 1.0);
    let text = std::fs::read_to_string(example("hayes.json")).unwrap().replace("[[-1]]", "[[-2]]");
    let dir = tempfile::tempdir().unwrap();
    let (code, report) = analyze(&write_config(dir.path(), "hayes2.json", &text));
    assert_eq!((code, report["verdict"].as_str()), (1, Some("unstable")));
    assert!(report["per_lambda"][0]["spectral_radius"].as_f64().unwrap() > 1.0);
}

#[test]
fn simulate_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.csv");
    let status = netsync(&["simulate", "--config", &example("k4_integrators.json"), "--out", out.to_str().unwrap()]);
    assert!(status.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("t,sync_error,state_norm,y_0_0_re,y_0_0_im"));
    assert_eq!(header.split(',').count(), 3 + 4 * 2);
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 101);
    assert!(rows.last().unwrap()[1] < 1e-6);
}

#[test]
fn diagonal_start_stays_synchronized() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.csv");
    let path = out.to_str().unwrap();
    let status = netsync(&["simulate", "--config", &example("heat_pair.json"), "--out", path, "--diagonal-init"]);
    assert!(status.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    for line in text.lines().skip(1) {
        let err: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(err <= 1e-10, "{err}");
    }
}

#[test]
fn seed_flag_changes_trace_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        netsync(&["simulate", "--config", &example("k4_integrators.json"), "--out", out.to_str().unwrap(), "--seed", seed]);
        std::fs::read_to_string(out).unwrap()
    };
    assert_eq!(run("5", "a.csv"), run("5", "b.csv"));
    assert_ne!(run("5", "c.csv"), run("6", "d.csv"));
}

#[test]
fn sweep_reports_boundary() {
    let out = netsync(&[
        "sweep", "--config", &example("hayes.json"), "--param", "system.a_mats.1.0.0", "--from", "-2", "--to", "-1",
        "--steps", "3", "--bisect",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "kind,param,verdict,indicator,fitted_rate");
    let boundary: Vec<f64> = lines
        .filter(|l| l.starts_with("1,"))
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(boundary.len(), 1);
    assert!((boundary[0] + std::f64::consts::FRAC_PI_2).abs() < 0.01, "{boundary:?}");
}

#[test]
fn kernel_files_reproduce_monodromy() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(example("hayes.json")).unwrap().replace(r#""delay_cells": 200"#, r#""delay_cells": 16"#);
    let cfg = write_config(dir.path(), "hayes.json", &text);
    let out = dir.path().join("kernels");
    let status = netsync(&["kernels", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(status.status.success());
    let read = |name: &str| std::fs::read_to_string(out.join(name)).unwrap();
    let (p, f, g) = (read("p.csv"), read("f.csv"), read("g.csv"));
    let ks = KernelSet::from_csv(&p, &f, Some(&g)).unwrap();
    let op = MonodromyOperator::from_kernels(&ks).unwrap();
    let Subsystem::Delay(spec) = Config::from_json(&text).unwrap().subsystem().unwrap() else { panic!() };
    let direct = monodromy(&spec, 16).unwrap();
    for (a, b) in [(&op.p_mat, &direct.p_mat), (&op.q_mat, &direct.q_mat), (&op.r_mat, &direct.r_mat)] {
        assert!((a - b).norm() <= 1e-12 * b.norm().max(1.0));
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(netsync(&["bogus"]).status.code(), Some(64));
    assert_eq!(netsync(&["analyze", "--config", "/no/such/file.json"]).status.code(), Some(64));
    let bad = write_config(dir.path(), "bad.json", "{\"system\": 1}");
    assert_eq!(netsync(&["analyze", "--config", &bad]).status.code(), Some(64));
    let kernels = netsync(&["kernels", "--config", &example("k4_integrators.json"), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(kernels.status.code(), Some(64));

    let skew = write_config(
        dir.path(),
        "skew.json",
        r#"{"system": {"kind": "lti", "a": [[0]], "b": [[1]], "c": [[1]]}, "coupling": {"matrix": [[0, 1], [0, 0]]}}"#,
    );
    assert_eq!(netsync(&["analyze", "--config", &skew]).status.code(), Some(65));

    let algebraic = write_config(
        dir.path(),
        "loop.json",
        r#"{"system": {"kind": "lti", "a": [[0]], "b": [[1]], "c": [[1]], "d": [[-0.5]]}, "coupling": {"weights": [[0, 1], [1, 0]]}}"#,
    );
    let out = netsync(&["analyze", "--config", &algebraic]);
    assert_eq!(out.status.code(), Some(70), "{}", String::from_utf8_lossy(&out.stderr));

    let out = netsync(&["simulate", "--config", &example("k4_integrators.json"), "--out", "/no/such/dir/trace.csv"]);
    assert_eq!(out.status.code(), Some(74));
    assert!(!out.stderr.is_empty());
}
