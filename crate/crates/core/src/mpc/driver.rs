//! Closed-loop MPC: horizon management, costate update and plant simulation.

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{State, TractionLimits, Trajectory, TrajectoryPoint, VehicleParams};
use crate::ocp::HorizonGrid;
use crate::oracle::nlp_feasibility_check;
use crate::powertrain::PowertrainKind;
use crate::qp::QpStatus;

use super::costate::CostateEstimator;
use super::heuristic::{heuristic_velocity, SpeedProfile};
use super::sqp::{plan_trajectory, rti_step, sqp_solve};
use super::{HorizonMode, MpcConfig, Scenario};

/// Audit tolerance on scaled violations.
const AUDIT_TOL: f64 = 1e-6;
/// SQP iterations spent per point of a λ search or f curve.
const SEARCH_SQP_ITER: usize = 4;

/// One line of the per-update log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub index: usize,
    /// Vehicle position ζ [m].
    pub zeta: f64,
    /// Costate used for this update [EUR/s].
    pub lambda: f64,
    /// `t* − t_H` [s].
    pub f: f64,
    /// Time budget of the horizon [s].
    pub t_horizon: f64,
    /// Predicted travel time over the horizon [s].
    pub t_pred: f64,
    /// Predicted clock time at the horizon end [s].
    pub t_end: f64,
    pub horizon_intervals: usize,
    pub qp_iters: usize,
    /// Exact λ-adjoined cost of the plan [EUR].
    pub objective: f64,
    pub solve_ms: f64,
    pub status: String,
    pub degraded: bool,
    /// Worst scaled violation of the plan against the nonlinear limits.
    pub audit_max: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MpcRun {
    pub trajectory: Trajectory,
    pub log: Vec<UpdateRecord>,
    pub heuristic: SpeedProfile,
    /// Route budget before any disturbance [s].
    pub t_f_initial: f64,
    /// Route budget at arrival [s].
    pub t_f: f64,
    pub lambda_max: f64,
    /// Worst scaled audit violation over all plans, when audited.
    pub audit_max: Option<f64>,
    pub degraded_updates: usize,
}

impl MpcRun {
    pub fn arrival_time(&self) -> f64 {
        self.trajectory.arrival_time()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.log.iter().map(|r| r.lambda).collect()
    }
}

/// Advances the exact model by one interval. The brake command is clipped
/// into its box and then adjusted so the traction force respects the lower
/// envelope; returns the next state and the applied `(F, F_brk)`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_step(
    state: &State,
    jerk: f64,
    brake: f64,
    grade_force: f64,
    ds: f64,
    params: &VehicleParams,
    limits: &dyn TractionLimits,
    kind: PowertrainKind,
) -> Result<(State, f64, f64)> {
    let m = params.mass;
    let e = state.energy;
    let total = m * state.accel + params.drag_per_energy() * e + grade_force;
    let mut fb = brake.clamp(params.brake_force_min, 0.0);
    let mut f = total - fb;
    let floor = match kind {
        PowertrainKind::Cv => 0.0,
        PowertrainKind::Ev => limits.force_min(e),
    };
    if f < floor {
        f = floor;
        fb = (total - floor).max(params.brake_force_min);
    }
    let jerk = jerk.clamp(params.jerk_min, params.jerk_max);
    let next = State {
        t: state.t + ds * (m / (2.0 * e)).sqrt(),
        energy: e + ds * m * state.accel,
        accel: state.accel + ds * jerk,
    };
    if !(next.energy > 0.0) {
        return Err(Error::Infeasible(format!("vehicle stops within the interval after t = {} s", state.t)));
    }
    Ok((next, f, fb))
}

fn initial_guess(grid: &HorizonGrid, prev: Option<&(f64, f64, Vec<f64>)>, heuristic: &SpeedProfile) -> Vec<f64> {
    (0..=grid.n)
        .map(|k| {
            let s = grid.position(k);
            if let Some((s0, ds, e)) = prev {
                let x = (s - s0) / ds;
                let last = (e.len() - 1) as f64;
                if x >= 0.0 && x <= last {
                    let i = (x.floor() as usize).min(e.len() - 2);
                    let w = x - i as f64;
                    return (1.0 - w) * e[i] + w * e[i + 1];
                }
            }
            heuristic.energy_at(s)
        })
        .collect()
}

/// Horizon travel time at `lambda`, from a short SQP run.
fn horizon_time(
    scenario: &Scenario,
    config: &MpcConfig,
    grid: &HorizonGrid,
    initial: &State,
    e_hat: &[f64],
    lambda: f64,
) -> Result<f64> {
    let coeffs = scenario.coeffs(config.w1, config.w2, lambda);
    let fit = scenario.powertrain.limits;
    let r = sqp_solve(
        grid,
        &coeffs,
        &fit,
        &scenario.params,
        initial,
        e_hat,
        config.beta,
        SEARCH_SQP_ITER,
        &config.solver(),
    )?;
    Ok(r.travel_time)
}

/// Smallest λ whose plan is within 0.1% of the saturated travel time. The
/// saturated time is taken at a time price far above any fuel price, then λ
/// is bisected in log space.
pub fn find_lambda_max(
    scenario: &Scenario,
    config: &MpcConfig,
    grid: &HorizonGrid,
    initial: &State,
    e_hat: &[f64],
) -> Result<(f64, f64)> {
    let time = |l: f64| horizon_time(scenario, config, grid, initial, e_hat, l);
    let (mut lo, mut hi) = (1e-6_f64.ln(), 1.0_f64.ln());
    let target = time(hi.exp())? * (1.0 + 1e-3);
    for _ in 0..24 {
        let mid = 0.5 * (lo + hi);
        if time(mid.exp())? <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (l, t) = (hi.exp(), time(hi.exp())?);
    debug!("lambda_max = {l:.5} EUR/s, saturated time {t:.1} s");
    Ok((l, t))
}

/// `f(λ) = t*(λ) − t_H` on a list of λ values for one horizon.
#[allow(clippy::too_many_arguments)]
pub fn f_curve(
    scenario: &Scenario,
    config: &MpcConfig,
    grid: &HorizonGrid,
    initial: &State,
    e_hat: &[f64],
    t_horizon: f64,
    lambdas: &[f64],
) -> Result<Vec<f64>> {
    lambdas.par_iter().map(|l| Ok(horizon_time(scenario, config, grid, initial, e_hat, *l)? - t_horizon)).collect()
}

/// Time budget of a horizon ending at `end` for a vehicle at clock `t`.
fn horizon_budget(mode: HorizonMode, heuristic: &SpeedProfile, end: f64, t: f64, t_f: f64, t_f0: f64) -> f64 {
    match mode {
        HorizonMode::Shrinking => t_f - t,
        HorizonMode::Moving => heuristic.travel_time(0.0, end) * t_f / t_f0 - t,
    }
}

/// Drives the whole route under MPC from the heuristic start state.
pub fn run_mpc(scenario: &Scenario, config: &MpcConfig) -> Result<MpcRun> {
    config.validate()?;
    let params = &scenario.params;
    let profile = &scenario.profile;
    let kind = scenario.powertrain.kind;
    let fit = scenario.powertrain.limits;
    let limits = scenario.limits();
    let opts = config.solver();
    let m = params.mass;
    let s_f = profile.length();

    let heuristic = heuristic_velocity(profile, params, &limits, config.v_cruise, config.ds)?;
    let t_f0 = heuristic.travel_time(0.0, s_f);
    let mut t_f = t_f0;
    let mut state = State { t: 0.0, energy: heuristic.energy[0], accel: 0.0 };

    let grid0 = HorizonGrid::on_route(profile, params, 0.0, config.horizon, config.ds)?;
    let e0 = initial_guess(&grid0, None, &heuristic);
    let t_h0 = horizon_budget(config.mode, &heuristic, grid0.start + grid0.length, 0.0, t_f, t_f0);
    let (lambda_max, t_sat) = match config.lambda_max {
        Some(l) => (l, None),
        None => {
            let (l, t) = find_lambda_max(scenario, config, &grid0, &state, &e0)?;
            (l, Some(t))
        }
    };
    let mut estimator = match config.lambda_fixed {
        Some(l) => {
            let mut e = CostateEstimator::with_slope(l, lambda_max.max(l), -1.0)?;
            e.frozen = true;
            e
        }
        None => {
            let f_max = horizon_time(scenario, config, &grid0, &state, &e0, 0.0)? - t_h0;
            let t_top = match t_sat {
                Some(t) => t,
                None => horizon_time(scenario, config, &grid0, &state, &e0, lambda_max)?,
            };
            CostateEstimator::warm_start(lambda_max, f_max, t_top - t_h0)?
        }
    };
    info!("MPC start: t_f = {t_f:.1} s, lambda_max = {lambda_max:.5}, lambda_0 = {:.5}", estimator.lambda);

    let steps = config.steps_per_update();
    let mut disturbance = config.disturbance;
    let mut prev: Option<(f64, f64, Vec<f64>)> = None;
    let mut points: Vec<TrajectoryPoint> = Vec::new();
    let mut log = Vec::new();
    let mut audit_max: Option<f64> = None;
    let mut degraded_updates = 0;
    let mut last_ds = config.ds;
    let mut zeta = 0.0;

    for index in 0.. {
        if zeta >= s_f - 1e-6 * s_f.max(1.0) {
            break;
        }
        if let Some(d) = disturbance {
            if zeta >= d.position {
                t_f += d.extra_time;
                disturbance = None;
                info!("budget changed by {:+.1} s at s = {zeta:.0} m", d.extra_time);
            }
        }
        let grid = HorizonGrid::on_route(profile, params, zeta, config.horizon, config.ds)?;
        if grid.n == 0 {
            break;
        }
        if grid.length < config.freeze_intervals as f64 * config.ds {
            estimator.frozen = true;
        }
        let t_h = horizon_budget(config.mode, &heuristic, grid.start + grid.length, state.t, t_f, t_f0);
        let e_hat = initial_guess(&grid, prev.as_ref(), &heuristic);
        let lambda = estimator.lambda;
        debug!("update {index}: s = {zeta:.0} m, N = {}, lambda = {lambda:.6}", grid.n);
        let coeffs = scenario.coeffs(config.w1, config.w2, lambda);
        let (plan, next_hat, qp_iters, status, degraded, solve_ms, objective, t_pred) = if config.rti {
            let out = rti_step(&grid, &coeffs, &fit, params, &state, &e_hat, config.beta, &opts)?;
            let sol = out.solution.as_ref();
            (
                out.plan,
                out.e_hat,
                sol.map_or(0, |s| s.iterations),
                sol.map_or(QpStatus::Optimal, |s| s.status),
                out.degraded,
                out.solve_ms,
                out.cost,
                out.travel_time,
            )
        } else {
            let clock = std::time::Instant::now();
            let r = sqp_solve(&grid, &coeffs, &fit, params, &state, &e_hat, config.beta, config.sqp_max_iter, &opts)?;
            let ms = clock.elapsed().as_secs_f64() * 1e3;
            let cost = r.cost();
            (r.plan, r.e_hat, r.qp_solves, QpStatus::Optimal, r.degraded, ms, cost, r.travel_time)
        };
        if degraded {
            degraded_updates += 1;
        }
        let audit = if config.audit {
            let traj = plan_trajectory(&plan, grid.start, grid.ds, state.t, &scenario.powertrain, m);
            let rep = nlp_feasibility_check(&traj, profile, params, kind, &limits, AUDIT_TOL)?;
            let worst = rep.max_scaled();
            audit_max = Some(audit_max.unwrap_or(0.0).max(worst));
            Some(worst)
        } else {
            None
        };
        let f = t_pred - t_h;
        log.push(UpdateRecord {
            index,
            zeta,
            lambda,
            f,
            t_horizon: t_h,
            t_pred,
            t_end: state.t + t_pred,
            horizon_intervals: grid.n,
            qp_iters,
            objective,
            solve_ms,
            status: format!("{status:?}"),
            degraded,
            audit_max: audit,
        });
        estimator.update(f);

        for k in 0..steps.min(grid.n) {
            let fa = grid.grade_force[k];
            let (next, force, brake) =
                simulate_step(&state, plan.jerk[k], plan.brake[k], fa, grid.ds, params, &limits, kind)?;
            points.push(TrajectoryPoint {
                s: grid.position(k),
                t: state.t,
                energy: state.energy,
                v: (2.0 * state.energy / m).sqrt(),
                accel: state.accel,
                jerk: plan.jerk[k].clamp(params.jerk_min, params.jerk_max),
                force,
                brake,
                gear: scenario.powertrain.gear_for(state.energy, force),
            });
            state = next;
            zeta = if k + 1 == grid.n { grid.start + grid.length } else { grid.position(k + 1) };
        }
        last_ds = grid.ds;
        prev = Some((grid.start, grid.ds, next_hat));
    }

    let last = *points.last().ok_or_else(|| Error::Dimension("route is shorter than one interval".into()))?;
    points.push(TrajectoryPoint {
        s: zeta,
        t: state.t,
        energy: state.energy,
        v: (2.0 * state.energy / m).sqrt(),
        accel: state.accel,
        ..last
    });
    Ok(MpcRun {
        trajectory: Trajectory { ds: last_ds, points },
        log,
        heuristic,
        t_f_initial: t_f0,
        t_f,
        lambda_max,
        audit_max,
        degraded_updates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Wide;
    impl TractionLimits for Wide {
        fn force_max(&self, _: f64) -> f64 {
            2e5
        }
        fn force_min(&self, _: f64) -> f64 {
            -5e4
        }
    }

    #[test]
    fn plant_applies_commanded_brake() {
        let p = VehicleParams::heavy_truck();
        let s = State { t: 0.0, energy: 8e6, accel: -0.2 };
        let (next, f, fb) = simulate_step(&s, 0.0, -3000.0, 2354.4, 100.0, &p, &Wide, PowertrainKind::Ev).unwrap();
        let total = -0.2 * 40_000.0 + p.drag_per_energy() * 8e6 + 2354.4;
        assert!((f + fb - total).abs() < 1e-9);
        assert_eq!(fb, -3000.0);
        assert!((next.energy - (8e6 - 100.0 * 40_000.0 * 0.2)).abs() < 1e-6);
        assert!((next.t - 100.0 / 20.0).abs() < 1e-12);
    }

    #[test]
    fn combustion_plant_moves_negative_traction_to_brake() {
        let p = VehicleParams::heavy_truck();
        let s = State { t: 0.0, energy: 8e6, accel: -0.5 };
        let (_, f, fb) = simulate_step(&s, 0.0, 0.0, 0.0, 100.0, &p, &Wide, PowertrainKind::Cv).unwrap();
        assert_eq!(f, 0.0);
        assert!(fb < 0.0);
    }
}
