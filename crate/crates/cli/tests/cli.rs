use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn branchctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_branchctl"))
        .args(args)
        .output()
        .expect("failed to spawn branchctl")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.json");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const OPTIMIZE: &str = r#"{
    "mesh": {"shape": "disk", "h": 0.15},
    "seed": {"lambda": 1.3},
    "target": 3.0,
    "diagram": {"lambda_start": 2.0, "lambda_end": 3.5, "dlambda": 0.1, "max_branches": 4},
    "output": "run"
}"#;

#[test]
fn mesh_command_writes_a_valid_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("disk.json");
    let o = branchctl(&["mesh", "--shape", "disk", "--h", "0.2", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mesh = branchctl::mesh::read_mesh(&out).unwrap();
    assert!((mesh.area() - std::f64::consts::PI).abs() < 0.1);
    assert!(dir.path().join("disk.json.summary.json").is_file());

    let sq = dir.path().join("square.json");
    let o = branchctl(&["mesh", "--shape", "rounded-square", "--h", "0.2", "--out", sq.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(branchctl::mesh::read_mesh(&sq).unwrap().area() < 4.0);
}

#[test]
fn optimize_then_recompute_diagram() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), OPTIMIZE);
    let o = branchctl(&["optimize", "--config", &cfg]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let run = dir.path().join("run");
    let s = json(&run.join("summary.json"));
    let lambda = s["lambda_final"].as_f64().unwrap();
    assert!((lambda - 3.0).abs() <= 1e-5, "{lambda}");
    let accepted = s["accepted_steps"].as_u64().unwrap();
    assert!(accepted > 0);
    for name in ["config.json", "history.csv", "final_mesh.json", "final_state.json", "mesh_0.json"] {
        assert!(run.join(name).is_file(), "{name}");
    }
    assert!(run.join(format!("state_{accepted}.json")).is_file());
    let history = fs::read_to_string(run.join("history.csv")).unwrap();
    assert!(history.starts_with("iteration,objective,step,accepted,reason\n"));
    assert_eq!(history.lines().count() as u64, 1 + s["iterations"].as_u64().unwrap());

    let mesh = run.join("final_mesh.json");
    let d = dir.path().join("diagram");
    let o = branchctl(&[
        "diagram",
        "--config",
        &cfg,
        "--mesh",
        mesh.to_str().unwrap(),
        "--out",
        d.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let births = json(&d.join("births.json"));
    let first = births[0]["lambda"].as_f64().unwrap();
    assert!((first - 3.0).abs() <= 0.03, "{first}");
    let csv = fs::read_to_string(d.join("diagram.csv")).unwrap();
    assert!(csv.starts_with("branch_id,lambda,diagnostic,is_fold\n"));

    for input in [d.join("diagram.csv"), run.join("history.csv")] {
        let svg = input.with_extension("svg");
        let o = branchctl(&["plot", "--input", input.to_str().unwrap(), "--out", svg.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let text = fs::read_to_string(&svg).unwrap();
        assert!(text.starts_with("<svg") && text.contains("<polyline"));
    }
}

#[test]
fn locate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"mesh": {"shape": "rounded_square", "edge": 2, "radius": 0.25, "h": 0.2},
            "seed": {"lambda": 1.0, "n": 3}}"#,
    );
    let mut states = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("r{k}"));
        let o = branchctl(&["locate", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        states.push(fs::read(out.join("state.json")).unwrap());
        let s = json(&out.join("summary.json"));
        assert!(s["objective_final"].is_null());
    }
    assert_eq!(states[0], states[1]);
}

#[test]
fn locate_from_a_nontrivial_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"mesh": {"shape": "disk", "h": 0.15},
            "seed": {"lambda": 2.0, "n": 3, "branch": {"kind": "mode", "index": 0, "amplitude": 1.2}},
            "target": 1.0}"#,
    );
    let out = dir.path().join("loc");
    let o = branchctl(&["locate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let state = json(&out.join("state.json"));
    let u = state["u"].as_array().unwrap();
    assert!(u.iter().any(|x| x.as_f64().unwrap().abs() > 0.1));
    let s = json(&out.join("summary.json"));
    let lambda = s["lambda_final"].as_f64().unwrap();
    assert!(lambda < 2.0, "fold lies below the seed parameter: {lambda}");
    assert!(s["objective_final"].as_f64().is_some());
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        r#"{"mesh": {"shape": "disk", "h": 0.15}, "bogus": 1}"#,
        r#"{"mesh": {"path": "missing.json"}}"#,
        r#"{"mesh": {"shape": "disk", "h": 0.15}, "diagram": {"dlambda": -1}}"#,
        r#"{"mesh": {"shape": "disk", "h": 0.15}, "inner_product": {"kind": "linear_elasticity", "mu": 0, "lambda": 1}}"#,
        "not json",
    ];
    for body in cases {
        let cfg = write_config(dir.path(), body);
        let o = branchctl(&["diagram", "--config", &cfg]);
        assert_eq!(code(&o), 2, "{body}");
        assert!(!o.stderr.is_empty());
        assert!(!dir.path().join("run").exists(), "no output before validation: {body}");
    }
    let cfg = write_config(dir.path(), r#"{"mesh": {"shape": "disk", "h": 0.15}}"#);
    assert_eq!(code(&branchctl(&["optimize", "--config", &cfg])), 2, "target is required");
    assert_eq!(code(&branchctl(&["diagram", "--config", "/nonexistent.json"])), 2);
    assert_eq!(code(&branchctl(&["frobnicate"])), 2);
}

#[test]
fn solver_failure_exits_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    // two Newton iterations from a large seed cannot converge
    let cfg = write_config(
        dir.path(),
        r#"{"mesh": {"shape": "disk", "h": 0.2},
            "seed": {"lambda": 1.0, "branch": {"kind": "mode", "index": 0, "amplitude": 1.2}},
            "solver": {"newton_max_iter": 2}}"#,
    );
    let o = branchctl(&["locate", "--config", &cfg]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn optimize_outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), OPTIMIZE);
    let runs: Vec<_> = (0..2)
        .map(|k| {
            let out = dir.path().join(format!("r{k}"));
            let o = branchctl(&["optimize", "--config", &cfg, "--out", out.to_str().unwrap()]);
            assert_eq!(code(&o), 0);
            out
        })
        .collect();
    for name in ["history.csv", "final_mesh.json", "final_state.json", "mesh_1.json"] {
        assert_eq!(fs::read(runs[0].join(name)).unwrap(), fs::read(runs[1].join(name)).unwrap(), "{name}");
    }
}
