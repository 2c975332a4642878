use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use uavplan_core::io::{evaluate_files, load_scenario, read_powers_csv, read_trajectory_csv};
use uavplan_core::oracle::recompute_metrics;
use uavplan_core::PlanReport;

fn uavplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uavplan"))
        .args(args)
        .output()
        .expect("failed to launch uavplan")
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn write_scenario(dir: &Path, name: &str, slots: usize, extra: &str) -> PathBuf {
    let path = dir.join(name);
    let json = format!(
        r#"{{"gn_positions": [[-200, 0], [200, 0]], "altitude_m": 100, "period_s": 60,
            "slots": {slots}, "ref_snr_db": 80, "peak_power_dbm": 10, "prop_limit_w": 150,
            "bandwidth_hz": 1e6, "v_min": 3, "v_max": 100, "a_max": 5{extra}}}"#
    );
    std::fs::write(&path, json).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn metrics(path: &Path) -> PlanReport {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn min_rate_run_writes_consistent_files() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = write_scenario(tmp.path(), "two.json", 40, "");
    let out = tmp.path().join("run");
    let res = uavplan(&["plan-minrate", "--scenario", s(&scen), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));

    let traj_csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = traj_csv.lines();
    assert_eq!(lines.next().unwrap(), "n,t,qx,qy,vx,vy,ax,ay,speed,p_prop_w,p_1,p_2");
    assert_eq!(lines.count(), 41);

    let scenario = load_scenario(&scen).unwrap();
    let report = metrics(&out.join("metrics.json"));
    let traj = read_trajectory_csv(&scenario, &out.join("trajectory.csv")).unwrap();
    let p = read_powers_csv(&scenario, &out.join("powers.csv")).unwrap();
    let oracle = recompute_metrics(&scenario, &traj, &p);
    assert!((report.ee_bits_per_joule / oracle.ee_bits_per_joule - 1.0).abs() <= 1e-6);

    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    let objective: Vec<f64> = trace
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(objective.len() >= 2);
    assert!(objective.windows(2).all(|w| w[1] >= w[0] - 1e-6));

    // Re-evaluating the dumped plan reproduces the metrics.
    let (_, again) = evaluate_files(&scenario, &out.join("trajectory.csv"), &out.join("powers.csv")).unwrap();
    for (a, b) in [
        (report.min_avg_rate, again.min_avg_rate),
        (report.avg_prop_power_w, again.avg_prop_power_w),
        (report.ee_bits_per_joule, again.ee_bits_per_joule),
        (report.avg_speed, again.avg_speed),
    ] {
        assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
    }

    // The eval subcommand accepts the trajectory table as the powers file too.
    let eval = uavplan(&[
        "eval",
        "--scenario",
        s(&scen),
        "--plan",
        s(&out.join("trajectory.csv")),
        "--powers",
        s(&out.join("trajectory.csv")),
    ]);
    assert_eq!(eval.status.code(), Some(0));
    let shown: PlanReport = serde_json::from_slice(&eval.stdout).unwrap();
    assert!((shown.min_avg_rate - report.min_avg_rate).abs() <= 1e-9);
}

#[test]
fn energy_efficiency_trace_has_lambda_column() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ee");
    let scen = bundled("k1_t60_n30.json");
    let res = uavplan(&["plan-ee", "--scenario", s(&scen), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,objective,lambda"));
    let report = metrics(&out.join("metrics.json"));
    assert!(report.dinkelbach_residual.is_some());
}

#[test]
fn circular_baselines_run() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = bundled("k1_t60_n30.json");
    for cmd in ["baseline-circular-minrate", "baseline-circular-ee"] {
        let out = tmp.path().join(cmd);
        let res = uavplan(&[cmd, "--scenario", s(&scen), "--out", s(&out)]);
        assert_eq!(res.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&res.stderr));
        assert!(out.join("metrics.json").exists());
    }
}

#[test]
fn scenario_directory_is_sharded() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("scenarios");
    std::fs::create_dir(&dir).unwrap();
    write_scenario(&dir, "a.json", 16, "");
    write_scenario(&dir, "b.json", 20, "");
    let out = tmp.path().join("out");
    let res = uavplan(&["plan-minrate", "--scenario-dir", s(&dir), "--out", s(&out), "--jobs", "2"]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(out.join("a/trajectory.csv").exists());
    assert!(out.join("b/trajectory.csv").exists());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    let good = write_scenario(tmp.path(), "good.json", 24, "");

    // Usage errors.
    assert_eq!(uavplan(&["plan-minrate", "--scenario", s(&good)]).status.code(), Some(1));
    assert_eq!(uavplan(&["plan-fast"]).status.code(), Some(1));
    assert_eq!(
        uavplan(&["plan-minrate", "--scenario", s(&good), "--out", s(&out), "--tol", "-1"]).status.code(),
        Some(1)
    );
    assert_eq!(uavplan(&["--help"]).status.code(), Some(0));

    // Validation errors.
    let zero = write_scenario(tmp.path(), "zero.json", 0, "");
    assert_eq!(uavplan(&["plan-minrate", "--scenario", s(&zero), "--out", s(&out)]).status.code(), Some(1));
    let missing = tmp.path().join("missing.json");
    assert_eq!(uavplan(&["plan-minrate", "--scenario", s(&missing), "--out", s(&out)]).status.code(), Some(1));

    // Infeasible power limit.
    let res = uavplan(&["plan-minrate", "--scenario", s(&good), "--out", s(&out), "--plim-w", "50"]);
    assert_eq!(res.status.code(), Some(3));

    // Iteration cap reached.
    let res = uavplan(&["plan-minrate", "--scenario", s(&good), "--out", s(&out), "--max-iters", "1"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(out.join("trajectory.csv").exists());
}

#[test]
fn verify_surrogates_passes() {
    let res = uavplan(&["verify-surrogates", "--samples", "2000", "--seed", "3"]);
    assert_eq!(res.status.code(), Some(0));
    let text = String::from_utf8_lossy(&res.stdout);
    assert!(!text.contains("FAIL"), "{text}");
}
