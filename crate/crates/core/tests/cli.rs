use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const OK: &str = r#"{"grid": {"nx": 8, "ny": 8}, "time": {"t_final": 0.5, "n_steps": 10},
 "control_domain": {"x": [0.0, 0.5], "y": [0.0, 1.0]},
 "admissible": {"kind": "box", "f_min": -1, "f_max": 1},
 "optimizer": {"max_iters": 50, "tol": 1e-6},
 "gradcheck": {"n_directions": 3}, "seed": 7}"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chemoopt"))
        .args(args)
        .env_remove("CHEMOOPT_THREADS")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("problem.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn run_with(cmd: &str, config: &Path, out: &Path) -> Output {
    run(&[
        cmd,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_config_is_a_usage_error() {
    let o = run(&["forward", "--config", "/nonexistent/problem.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains("/nonexistent/problem.json"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn bad_arguments_are_usage_errors() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["forward"]).status.code(), Some(1));
    assert_eq!(run(&["simulate", "--config", "x"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_key_is_a_usage_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"grid": {"nx": 4, "ny": 4}, "time": {"t_final": 1, "n_steps": 2},
            "weights": {"alpha_u": 1, "alpha_w": 2}}"#,
    );
    let o = run_with("forward", &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("weights.alpha_w"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn oversized_time_step_is_a_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"grid": {"nx": 4, "ny": 4}, "time": {"t_final": 1, "n_steps": 1},
            "initial_control": {"kind": "constant", "value": 20}}"#,
    );
    let o = run_with("forward", &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("dt too large"), "{}", stderr(&o));
}

#[test]
fn forward_writes_snapshots_and_conserved_mass() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), OK);
    let out = dir.path().join("out");
    let o = run(&[
        "forward",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--snap-every",
        "4",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for n in [0, 4, 8, 10] {
        assert!(out.join(format!("u_{n:05}.vtk")).exists());
        assert!(out.join(format!("v_{n:05}.vtk")).exists());
    }
    assert!(!out.join("u_00005.vtk").exists());

    let mass = std::fs::read_to_string(out.join("mass.csv")).unwrap();
    let mut lines = mass.lines();
    assert_eq!(lines.next(), Some("step,t,mass"));
    let values: Vec<f64> = lines
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 11);
    for m in &values {
        assert!((m - values[0]).abs() <= 1e-11 * values[0]);
    }
    let mins = std::fs::read_to_string(out.join("min_values.csv")).unwrap();
    assert!(mins.starts_with("step,t,min_u,min_v\n"));
}

#[test]
fn output_dir_resolves_against_config_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"grid": {"nx": 4, "ny": 4}, "time": {"t_final": 0.1, "n_steps": 2},
            "output_dir": "results"}"#,
    );
    let o = run(&["forward", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("results").join("mass.csv").exists());
}

#[test]
fn verify_passes_on_a_sound_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), OK);
    let o = run_with("verify", &cfg, &dir.path().join("out"));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}{}", stderr(&o));
    let lines: Vec<&str> = stdout.lines().collect();
    assert!(lines.len() >= 6, "{stdout}");
    assert!(
        lines
            .iter()
            .all(|l| l.starts_with("PASS ") || l.starts_with("SKIP ")),
        "{stdout}"
    );
}

#[test]
fn verify_fails_with_a_loose_linear_solver() {
    let dir = tempfile::tempdir().unwrap();
    let loose = OK.replacen("\"seed\": 7", "\"seed\": 7, \"solver\": {\"tol\": 1e-2}", 1);
    let cfg = write_config(dir.path(), &loose);
    let o = run_with("verify", &cfg, &dir.path().join("out"));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(3), "{stdout}{}", stderr(&o));
    assert!(stdout.lines().any(|l| l.starts_with("FAIL ")), "{stdout}");
}

#[test]
fn optimize_outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), OK);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run_with("optimize", &cfg, out);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for name in ["control.csv", "history.csv", "report.json"] {
        let x = std::fs::read(a.join(name)).unwrap();
        let y = std::fs::read(b.join(name)).unwrap();
        assert_eq!(x, y, "{name} differs between runs");
    }
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["termination"], "converged");
    let history: Vec<f64> = report["j_history"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert!(history.windows(2).all(|w| w[1] <= w[0]));
    let control = std::fs::read_to_string(a.join("control.csv")).unwrap();
    assert_eq!(control.lines().count(), 1 + 10 * 64);
    for line in control.lines().skip(1) {
        let f: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((-1.0..=1.0).contains(&f));
    }
}

#[test]
fn gradcheck_writes_one_row_per_direction() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), OK);
    let out = dir.path().join("out");
    let o = run_with("gradcheck", &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("gradcheck.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("direction,adjoint,finite_difference,eps,relative_error")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let err: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!(err < 1e-6, "{row}");
    }
}
