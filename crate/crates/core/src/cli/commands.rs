//! Subcommand bodies. Each returns the paths it wrote.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use log::info;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{RoadProfile, State, Trajectory};
use crate::mpc::{
    compare_cases, heuristic_trajectory, plan_trajectory, route_setup, run_mpc, solve_reference, sqp_solve, sweep_w2,
    CostBreakdown, MpcConfig, Scenario,
};
use crate::ocp::{assemble_qp, HorizonGrid};
use crate::oracle::{dp_solve, DpGrid};
use crate::powertrain::artifact::{load, save};
use crate::powertrain::{ActuatorMap, ForceLimitFit, GearMap, PowerFit, Powertrain, WheelTables};
use crate::qp::{solve as qp_solve, QpStatus};

use super::config::{CaseLabel, RouteSource, RunConfig};
use super::road::ingest_road;

/// File names of the fitted artifacts, in pipeline order.
pub const ARTIFACT_FILES: [&str; 3] = ["gear_map.json", "power_fit.json", "force_limits.json"];

fn write_json<T: Serialize>(path: PathBuf, value: &T, written: &mut Vec<PathBuf>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(&path, text)?;
    written.push(path);
    Ok(())
}

fn write_trajectory(path: PathBuf, traj: &Trajectory, written: &mut Vec<PathBuf>) -> Result<()> {
    traj.write_csv(BufWriter::new(File::create(&path)?))?;
    written.push(path);
    Ok(())
}

fn synthesize_map(cfg: &RunConfig) -> Result<(ActuatorMap, GearMap)> {
    let p = &cfg.powertrain;
    let map = ActuatorMap::synthesize(cfg.kind, p.rated_power, p.omega_idle, p.omega_max)?;
    let tables = WheelTables::build(&map, &cfg.vehicle, &p.grid)?;
    Ok((map, GearMap::optimise(&tables)))
}

/// Reads the fitted artifacts and checks that they belong to this vehicle.
pub fn load_powertrain(cfg: &RunConfig) -> Result<Powertrain> {
    let dir = cfg.artifact_dir();
    if let Some(name) = ARTIFACT_FILES.iter().find(|f| !dir.join(f).is_file()) {
        return Err(Error::Config(format!(
            "fitted artifact {name} not found in {}; run `ecodrive fit-maps` with the same config first",
            dir.display()
        )));
    }
    let gear_map: GearMap = load(&dir.join(ARTIFACT_FILES[0]))?;
    let power: PowerFit = load(&dir.join(ARTIFACT_FILES[1]))?;
    let limits: ForceLimitFit = load(&dir.join(ARTIFACT_FILES[2]))?;
    if gear_map.kind != cfg.kind || power.kind != cfg.kind {
        return Err(Error::Config(format!(
            "artifacts in {} were fitted for a {} powertrain, config asks for {}",
            dir.display(),
            power.kind,
            cfg.kind
        )));
    }
    if (gear_map.mass - cfg.vehicle.mass).abs() > 1e-9 * cfg.vehicle.mass {
        return Err(Error::Config(format!(
            "artifacts were fitted for mass {} kg, vehicle has {} kg; rerun `ecodrive fit-maps`",
            gear_map.mass, cfg.vehicle.mass
        )));
    }
    Ok(Powertrain { kind: cfg.kind, power, limits, gear_map: Some(gear_map) })
}

fn route(cfg: &RunConfig) -> Result<RoadProfile> {
    match &cfg.route {
        RouteSource::File { path, band } => ingest_road(path, *band),
        RouteSource::Synthetic(r) => RoadProfile::synthetic(r),
    }
}

/// Route, vehicle and fitted powertrain of a run.
pub fn scenario(cfg: &RunConfig) -> Result<Scenario> {
    Ok(Scenario {
        params: cfg.vehicle.clone(),
        profile: route(cfg)?,
        powertrain: load_powertrain(cfg)?,
        energy_price: cfg.energy_price(),
    })
}

/// Jerk weight of the configured case; `None` for heuristic driving.
fn case_w2(cfg: &RunConfig) -> Option<f64> {
    match cfg.case {
        CaseLabel::Hg => None,
        CaseLabel::Case1 => Some(0.0),
        CaseLabel::Case2 => Some(cfg.case2_w2),
    }
}

/// MPC settings with `--n` route samples applied.
fn route_config(cfg: &RunConfig, length: f64, n: Option<usize>) -> MpcConfig {
    let mut mpc = cfg.mpc.clone();
    if let Some(n) = n {
        mpc.ds = length / n as f64;
        mpc.update_step = mpc.ds;
        mpc.horizon = mpc.horizon.max(mpc.ds);
    }
    mpc
}

fn heuristic_run(sc: &Scenario, mpc: &MpcConfig, w2: f64) -> Result<Trajectory> {
    let (speed, ..) = route_setup(sc, mpc)?;
    heuristic_trajectory(&speed, &sc.profile, &sc.params, &sc.powertrain, &sc.coeffs(0.0, w2, 0.0))
}

#[derive(Serialize)]
struct FitReport<'a> {
    kind: String,
    power_fit: &'a PowerFit,
    force_limits: &'a ForceLimitFit,
    grid_shape: [usize; 2],
    feasible_cells: usize,
}

pub(super) fn fit_maps(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let (_, gear_map) = synthesize_map(cfg)?;
    let power = PowerFit::from_gear_map(&gear_map, cfg.powertrain.fit_speed)?;
    let limits = ForceLimitFit::from_gear_map(&gear_map, cfg.powertrain.limit_v0, None)?;
    let mut written = Vec::new();
    for (name, result) in ARTIFACT_FILES.iter().zip([
        save(&gear_map, &cfg.out.join(ARTIFACT_FILES[0])),
        save(&power, &cfg.out.join(ARTIFACT_FILES[1])),
        save(&limits, &cfg.out.join(ARTIFACT_FILES[2])),
    ]) {
        result?;
        written.push(cfg.out.join(name));
    }
    let (n_e, n_f) = gear_map.shape();
    let report = FitReport {
        kind: cfg.kind.to_string(),
        power_fit: &power,
        force_limits: &limits,
        grid_shape: [n_e, n_f],
        feasible_cells: gear_map.gear.iter().filter(|g| **g != 0).count(),
    };
    write_json(cfg.out.join("fit_report.json"), &report, &mut written)?;
    info!("power fit max relative residual {:.3}", power.residual.max_rel);
    Ok(written)
}

pub(super) fn gear_map(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let (_, map) = synthesize_map(cfg)?;
    let mut written = Vec::new();
    let json = cfg.out.join(ARTIFACT_FILES[0]);
    save(&map, &json)?;
    written.push(json);
    let path = cfg.out.join("gear_map_contour.csv");
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&path)?));
    w.write_record(["E_J", "v_kmh", "F_N", "gear", "P_W"])?;
    let (_, n_f) = map.shape();
    for (i, &e) in map.energy.iter().enumerate() {
        let v_kmh = map.speed_of(e) * 3.6;
        for (k, &f) in map.force.iter().enumerate() {
            let cell = i * n_f + k;
            let power = map.power[cell].map(|p| p.to_string()).unwrap_or_default();
            w.write_record([e.to_string(), v_kmh.to_string(), f.to_string(), map.gear[cell].to_string(), power])?;
        }
    }
    w.flush()?;
    written.push(path);
    Ok(written)
}

#[derive(Serialize)]
struct SolveSummary {
    case: CaseLabel,
    w2: f64,
    lambda_eur_per_s: f64,
    horizon_m: f64,
    intervals: usize,
    objective_eur: f64,
    travel_time_s: f64,
    sqp_iterations: usize,
    qp_solves: usize,
    converged: bool,
    cost: CostBreakdown,
}

pub(super) fn solve(cfg: &RunConfig, n: Option<usize>) -> Result<Vec<PathBuf>> {
    let sc = scenario(cfg)?;
    let length = cfg.mpc.horizon.min(sc.profile.length());
    let mut mpc = cfg.mpc.clone();
    if let Some(n) = n {
        mpc.ds = length / n as f64;
    }
    let mut written = Vec::new();
    let Some(w2) = case_w2(cfg) else {
        let traj = heuristic_run(&sc, &mpc, cfg.case2_w2)?;
        let cost = CostBreakdown::evaluate(&traj, &sc.coeffs(mpc.w1, cfg.case2_w2, 0.0));
        write_trajectory(cfg.out.join("solve.csv"), &traj, &mut written)?;
        write_json(
            cfg.out.join("solve_summary.json"),
            &serde_json::json!({ "case": cfg.case, "cost": cost }),
            &mut written,
        )?;
        return Ok(written);
    };
    mpc.w2 = w2;
    let (heuristic, initial, ..) = route_setup(&sc, &mpc)?;
    let (lambda, result, grid) = match mpc.lambda_fixed {
        Some(lambda) => {
            let grid = HorizonGrid::on_route(&sc.profile, &sc.params, 0.0, length, mpc.ds)?;
            let e_hat: Vec<f64> = (0..=grid.n).map(|k| heuristic.energy_at(grid.position(k))).collect();
            let coeffs = sc.coeffs(mpc.w1, w2, lambda);
            let r = sqp_solve(&grid, &coeffs, &sc.powertrain.limits, &sc.params, &initial, &e_hat, mpc.beta, mpc.sqp_max_iter, &mpc.solver())?;
            (lambda, r, grid)
        }
        None if length >= sc.profile.length() => {
            let r = solve_reference(&sc, &mpc, None)?;
            let grid = HorizonGrid::on_route(&sc.profile, &sc.params, 0.0, length, mpc.ds)?;
            (r.lambda, r.sqp, grid)
        }
        None => {
            return Err(Error::Config(
                "a horizon shorter than the route needs mpc.lambda_fixed; the costate is only root-found on the whole route".into(),
            ))
        }
    };
    if !result.converged {
        log::warn!("SQP stopped after {} iterations without converging", result.iterations());
    }
    let traj = plan_trajectory(&result.plan, grid.start, grid.ds, 0.0, &sc.powertrain, sc.params.mass);
    let summary = SolveSummary {
        case: cfg.case,
        w2,
        lambda_eur_per_s: lambda,
        horizon_m: grid.length,
        intervals: grid.n,
        objective_eur: result.cost(),
        travel_time_s: result.travel_time,
        sqp_iterations: result.iterations(),
        qp_solves: result.qp_solves,
        converged: result.converged,
        cost: CostBreakdown::evaluate(&traj, &sc.coeffs(mpc.w1, w2, 0.0)),
    };
    write_trajectory(cfg.out.join("solve.csv"), &traj, &mut written)?;
    write_json(cfg.out.join("solve_summary.json"), &summary, &mut written)?;
    Ok(written)
}

#[derive(Serialize)]
struct MpcSummary {
    case: CaseLabel,
    w2: f64,
    updates: usize,
    lambda_final_eur_per_s: f64,
    lambda_max_eur_per_s: f64,
    t_f_initial_s: f64,
    t_f_s: f64,
    arrival_s: f64,
    degraded_updates: usize,
    audit_max: Option<f64>,
    cost: CostBreakdown,
}

pub(super) fn mpc(cfg: &RunConfig, n: Option<usize>) -> Result<Vec<PathBuf>> {
    let sc = scenario(cfg)?;
    let mut mpc = route_config(cfg, sc.profile.length(), n);
    let mut written = Vec::new();
    let Some(w2) = case_w2(cfg) else {
        let traj = heuristic_run(&sc, &mpc, cfg.case2_w2)?;
        let cost = CostBreakdown::evaluate(&traj, &sc.coeffs(mpc.w1, cfg.case2_w2, 0.0));
        write_trajectory(cfg.out.join("mpc_trajectory.csv"), &traj, &mut written)?;
        write_json(
            cfg.out.join("mpc_summary.json"),
            &serde_json::json!({ "case": cfg.case, "cost": cost }),
            &mut written,
        )?;
        return Ok(written);
    };
    mpc.w2 = w2;
    let run = run_mpc(&sc, &mpc)?;
    write_trajectory(cfg.out.join("mpc_trajectory.csv"), &run.trajectory, &mut written)?;
    let log_path = cfg.out.join("mpc_log.jsonl");
    let mut log = BufWriter::new(File::create(&log_path)?);
    for record in &run.log {
        serde_json::to_writer(&mut log, record)?;
        log.write_all(b"\n")?;
    }
    log.flush()?;
    written.push(log_path);
    let summary = MpcSummary {
        case: cfg.case,
        w2,
        updates: run.log.len(),
        lambda_final_eur_per_s: run.log.last().map_or(0.0, |r| r.lambda),
        lambda_max_eur_per_s: run.lambda_max,
        t_f_initial_s: run.t_f_initial,
        t_f_s: run.t_f,
        arrival_s: run.arrival_time(),
        degraded_updates: run.degraded_updates,
        audit_max: run.audit_max,
        cost: CostBreakdown::evaluate(&run.trajectory, &sc.coeffs(mpc.w1, w2, 0.0)),
    };
    write_json(cfg.out.join("mpc_summary.json"), &summary, &mut written)?;
    Ok(written)
}

pub(super) fn compare(cfg: &RunConfig, n: Option<usize>) -> Result<Vec<PathBuf>> {
    let sc = scenario(cfg)?;
    let mpc = route_config(cfg, sc.profile.length(), n);
    let cmp = compare_cases(&sc, &mpc, cfg.case2_w2)?;
    let mut written = Vec::new();
    write_trajectory(cfg.out.join("compare_hg.csv"), &cmp.hg, &mut written)?;
    write_trajectory(cfg.out.join("compare_case1.csv"), &cmp.case1.trajectory, &mut written)?;
    write_trajectory(cfg.out.join("compare_case2.csv"), &cmp.case2.trajectory, &mut written)?;
    write_json(cfg.out.join("compare_summary.json"), &cmp.summary, &mut written)?;
    Ok(written)
}

#[derive(Serialize)]
struct OracleLevel {
    energy_levels: usize,
    accel_levels: usize,
    lattice_cost_eur: f64,
    rollout_cost_eur: f64,
    gap_pct: f64,
}

#[derive(Serialize)]
struct OracleReport {
    start_m: f64,
    length_m: f64,
    intervals: usize,
    lambda_eur_per_s: f64,
    w2: f64,
    sqp_cost_eur: f64,
    sqp_iterations: usize,
    levels: Vec<OracleLevel>,
    /// Lattice gap shrinks with every refinement.
    monotone: bool,
}

pub(super) fn oracle(cfg: &RunConfig, n: Option<usize>) -> Result<Vec<PathBuf>> {
    let sc = scenario(cfg)?;
    let o = &cfg.oracle;
    let intervals = n.unwrap_or(o.intervals);
    let grid = HorizonGrid::on_route(&sc.profile, &sc.params, o.start_m, o.length_m, o.length_m / intervals as f64)?;
    let coeffs = sc.coeffs(cfg.mpc.w1, o.w2, o.lambda);
    let e0 = sc.energy(o.v0_kmh / 3.6);
    let initial = State { t: 0.0, energy: e0, accel: 0.0 };
    let e_hat = vec![e0; grid.n + 1];
    let sqp =
        sqp_solve(&grid, &coeffs, &sc.powertrain.limits, &sc.params, &initial, &e_hat, 1.0, 30, &cfg.mpc.solver())?;
    let limits = sc.limits();
    let mut levels = Vec::new();
    for &ne in &o.energy_levels {
        let dp = DpGrid { energy_levels: ne, accel_levels: o.accel_levels, ..DpGrid::default() };
        let d = dp_solve(&grid, &coeffs, &limits, &sc.params, &initial, &dp)?;
        levels.push(OracleLevel {
            energy_levels: ne,
            accel_levels: o.accel_levels,
            lattice_cost_eur: d.lattice_cost,
            rollout_cost_eur: d.cost,
            gap_pct: 100.0 * (d.lattice_cost - sqp.cost()) / sqp.cost().abs(),
        });
    }
    let monotone = levels.windows(2).all(|w| w[1].gap_pct.abs() <= w[0].gap_pct.abs());
    let report = OracleReport {
        start_m: grid.start,
        length_m: grid.length,
        intervals: grid.n,
        lambda_eur_per_s: o.lambda,
        w2: o.w2,
        sqp_cost_eur: sqp.cost(),
        sqp_iterations: sqp.iterations(),
        levels,
        monotone,
    };
    let mut written = Vec::new();
    write_json(cfg.out.join("oracle.json"), &report, &mut written)?;
    Ok(written)
}

pub(super) fn sweep(cfg: &RunConfig, n: Option<usize>) -> Result<Vec<PathBuf>> {
    let sc = scenario(cfg)?;
    let mpc = route_config(cfg, sc.profile.length(), n);
    let points = sweep_w2(&sc, &mpc, &cfg.sweep_weights)?;
    let path = cfg.out.join("sweep_w2.csv");
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&path)?));
    w.write_record([
        "w2_eur_s4_per_m",
        "lambda_eur_per_s",
        "j_rms_mps3",
        "energy_cost_eur",
        "drivability_cost_eur",
        "total_cost_eur",
        "arrival_s",
    ])?;
    for p in &points {
        w.write_record([
            p.w2.to_string(),
            p.lambda.to_string(),
            p.j_rms.to_string(),
            p.energy_cost.to_string(),
            p.drivability_cost.to_string(),
            (p.energy_cost + p.drivability_cost).to_string(),
            p.arrival_time.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(vec![path])
}

/// Least-squares line through `(x, y)` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn line_fit(xs: &[f64], ys: &[f64]) -> LineFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    LineFit { slope, intercept: my - slope * mx, r_squared }
}

/// Median wall time [ms] of one QP solve with `n` intervals over the whole
/// route at costate `lambda`, linearised about the heuristic. Assembly is
/// not timed.
pub fn bench_qp(sc: &Scenario, mpc: &MpcConfig, n: usize, repeats: usize, lambda: f64) -> Result<f64> {
    let cfg = MpcConfig { ds: sc.profile.length() / n as f64, ..mpc.clone() };
    let (heuristic, initial, grid, _) = route_setup(sc, &cfg)?;
    let e_hat: Vec<f64> = (0..=grid.n).map(|k| heuristic.energy_at(grid.position(k))).collect();
    let coeffs = sc.coeffs(cfg.w1, cfg.w2, lambda);
    let qp = assemble_qp(&grid, &coeffs, &sc.powertrain.limits, &sc.params, &e_hat, &initial)?;
    let opts = cfg.solver();
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats.max(1) {
        let clock = Instant::now();
        let sol = qp_solve(&qp.problem, None, &opts)?;
        times.push(clock.elapsed().as_secs_f64() * 1e3);
        if sol.status == QpStatus::Infeasible {
            return Err(Error::Infeasible(format!("benchmark QP with N = {n} is infeasible")));
        }
    }
    times.sort_by(f64::total_cmp);
    Ok(times[times.len() / 2])
}

pub(super) fn bench(cfg: &RunConfig, n: Option<usize>) -> Result<Vec<PathBuf>> {
    let sc = scenario(cfg)?;
    let sizes = n.map_or_else(|| cfg.bench.sizes.clone(), |n| vec![n]);
    let mut times = Vec::with_capacity(sizes.len());
    for &size in &sizes {
        let ms = bench_qp(&sc, &cfg.mpc, size, cfg.bench.repeats, cfg.bench.lambda)?;
        info!("N = {size}: {ms:.2} ms");
        times.push(ms);
    }
    let mut written = Vec::new();
    let path = cfg.out.join("bench.csv");
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&path)?));
    w.write_record(["n", "solve_ms"])?;
    for (size, ms) in sizes.iter().zip(&times) {
        w.write_record([size.to_string(), ms.to_string()])?;
    }
    w.flush()?;
    written.push(path);
    if sizes.len() > 1 {
        let xs: Vec<f64> = sizes.iter().map(|s| *s as f64).collect();
        write_json(cfg.out.join("bench_fit.json"), &line_fit(&xs, &times), &mut written)?;
    }
    Ok(written)
}
