use std::path::Path;
use std::process::{Command, Output};

fn agesir(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agesir"))
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

const SMALL_PIDE: &str = "[grid]\nda = 0.05\n[scheme]\ndt = 0.01\nhorizon = 0.5\n";

#[test]
fn r0_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "r0.toml", "[rates]\nbeta0 = 600\n");
    let out = agesir(&["r0", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["r0"].as_f64().unwrap() - 0.8894).abs() < 0.01);
    assert_eq!(v["classification"], "DFE-stable");
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfl = write_config(dir.path(), "cfl.toml", "[scheme]\ndt = 0.02\n");
    let out = agesir(&["simulate-pide", &cfl]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("CFL"));

    let bad = write_config(dir.path(), "bad.toml", "[grid]\nda = [1\n");
    assert_eq!(agesir(&["r0", &bad]).status.code(), Some(1));
    assert_eq!(
        agesir(&["r0", "/nonexistent/config.toml"]).status.code(),
        Some(1)
    );
    assert_eq!(agesir(&["reproduce-figure", "12"]).status.code(), Some(1));
    assert_eq!(agesir(&["no-such-command"]).status.code(), Some(1));
    // a class config handed to the field simulator
    let ode = write_config(dir.path(), "ode.toml", "model = \"ode\"\n");
    assert_eq!(agesir(&["simulate-pide", &ode]).status.code(), Some(1));
}

#[test]
fn numerical_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    // explicit Euler cannot keep S >= 0 with this much transmission
    let cfg = write_config(
        dir.path(),
        "blow.toml",
        "[rates]\nbeta0 = 1e9\n[scheme]\nhorizon = 0.1\n",
    );
    let out = agesir(&[
        "simulate-pide",
        &cfg,
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn simulate_writes_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SMALL_PIDE);
    let out_dir = dir.path().join("run");
    let out = agesir(&["simulate-pide", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    for key in [
        "r0",
        "classification",
        "converged",
        "final_total_infected",
        "wall_time_s",
    ] {
        assert!(!report[key].is_null(), "missing {key}");
    }
    let infected = std::fs::read_to_string(out_dir.join("infected.csv")).unwrap();
    let mut lines = infected.lines();
    assert_eq!(lines.next(), Some("t,a,value"));
    let first: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|x| x.parse().unwrap())
        .collect();
    assert_eq!(first.len(), 3);
    assert!(infected.lines().nth(1).unwrap().contains('e'));
    let control = std::fs::read_to_string(out_dir.join("control.csv")).unwrap();
    assert!(control.starts_with("t,a,theta\n"));
}

#[test]
fn class_runs_use_class_indices() {
    let dir = tempfile::tempdir().unwrap();
    let text = "model = \"ode\"\n[integrator]\nclasses = 10\nhorizon = 0.05\nstop = \"horizon\"\n";
    let cfg = write_config(dir.path(), "ode.toml", text);
    let out_dir = dir.path().join("ode");
    let out = agesir(&["simulate-ode", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let s = std::fs::read_to_string(out_dir.join("susceptible.csv")).unwrap();
    assert!(s.starts_with("t,k,value\n"));
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert!(summary.starts_with("t,total_I,total_S,total_R,min_state,max_state\n"));
}

#[test]
fn identical_configs_give_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "det.toml", SMALL_PIDE);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        assert!(
            agesir(&["simulate-pide", &cfg, "--out", d.to_str().unwrap()])
                .status
                .success()
        );
    }
    for f in [
        "susceptible.csv",
        "infected.csv",
        "recovered.csv",
        "control.csv",
        "summary.csv",
        "infected_bins.csv",
    ] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn gain_table_and_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "gains.toml", "");
    let out = agesir(&["design-gains", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("a,alpha1,alpha2,g,h\n"));
    assert_eq!(text.lines().count(), 101);

    let out = agesir(&["check-stability", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["certified"], true);
    assert!(v["growth_bound"].as_f64().unwrap() < 0.0);

    let given = write_config(
        dir.path(),
        "given.toml",
        "[certificate]\nc1 = 3.0\nc2 = 1.0\nk = 1.0\n",
    );
    let v: serde_json::Value =
        serde_json::from_slice(&agesir(&["check-stability", &given]).stdout).unwrap();
    assert_eq!(v["certified"], false);
}

#[test]
fn figure_preset_writes_into_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("fig7");
    let out = agesir(&["reproduce-figure", "7", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["converged"], true);
    assert!(v["min_applied_theta"].as_f64().unwrap() >= 0.0);
    assert!(out_dir.join("control.csv").exists());
}
