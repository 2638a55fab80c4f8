//! Runs the `ecodrive` binary: artifact flow, error reporting, determinism
//! and output headers.

use std::path::Path;
use std::process::{Command, Output};

const SHORT_ROUTE: &str = r#"
kind = "cv"
case = "case1"

[route.synthetic]
length = 20000.0
seed = 3

[mpc]
horizon = 20000.0
ds = 250.0
update_step = 250.0
"#;

fn ecodrive(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecodrive"))
        .args(args)
        .arg("--config")
        .arg(dir.join("run.toml"))
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), SHORT_ROUTE).unwrap();
    dir
}

fn error_doc(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr {stderr:?} is not JSON: {e}"))
}

#[test]
fn planning_without_fitted_maps_points_at_fit_maps() {
    let dir = workspace();
    let out = ecodrive(dir.path(), &["mpc"]);
    assert_eq!(out.status.code(), Some(2));
    let doc = error_doc(&out);
    assert!(doc["message"].as_str().unwrap().contains("fit-maps"), "{doc}");
}

#[test]
fn malformed_route_reports_its_line() {
    let dir = workspace();
    let route = dir.path().join("road.csv");
    std::fs::write(&route, "distance_m,elevation_m\n0,0\n500,3\n400,4\n").unwrap();
    let out = ecodrive(dir.path(), &["mpc", "--route", route.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let doc = error_doc(&out);
    assert_eq!(doc["error"], "parse");
    assert_eq!(doc["line"], 4);
}

#[test]
fn closed_loop_outputs_are_reproducible_and_labelled() {
    let dir = workspace();
    let fit = ecodrive(dir.path(), &["fit-maps"]);
    assert!(fit.status.success(), "{}", String::from_utf8_lossy(&fit.stderr));
    let out_dir = dir.path().join("out");
    for name in ["gear_map.json", "power_fit.json", "force_limits.json"] {
        assert!(out_dir.join(name).is_file(), "{name} missing");
    }

    let run = |tag: &str| {
        let out = ecodrive(dir.path(), &["mpc"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let traj = std::fs::read_to_string(out_dir.join("mpc_trajectory.csv")).unwrap();
        let log = std::fs::read_to_string(out_dir.join("mpc_log.jsonl")).unwrap();
        std::fs::rename(out_dir.join("mpc_trajectory.csv"), out_dir.join(format!("traj_{tag}.csv"))).unwrap();
        (traj, log)
    };
    let (first, log_a) = run("a");
    let (second, log_b) = run("b");
    assert_eq!(first, second);
    let strip = |log: &str| -> Vec<serde_json::Value> {
        log.lines()
            .map(|l| {
                let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                v.as_object_mut().unwrap().remove("solve_ms");
                v
            })
            .collect()
    };
    assert_eq!(strip(&log_a), strip(&log_b));

    let header = first.lines().next().unwrap();
    assert_eq!(header, "s_m,t_s,v_kmh,E_J,a_mps2,j,F_N,F_brk_N,gear");
}
