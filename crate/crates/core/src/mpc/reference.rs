//! Offline references: the full-route plan meeting the time budget exactly,
//! the comfort-weight trade-off and the three-case comparison.

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{State, Trajectory};
use crate::ocp::HorizonGrid;

use super::driver::{find_lambda_max, run_mpc, MpcRun};
use super::heuristic::{heuristic_trajectory, heuristic_velocity, SpeedProfile};
use super::metrics::CostBreakdown;
use super::sqp::{plan_trajectory, sqp_solve, SqpResult};
use super::{MpcConfig, Scenario};

#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub lambda: f64,
    pub sqp: SqpResult,
    pub trajectory: Trajectory,
    /// Time budget the plan was solved for [s].
    pub budget: f64,
    /// SQP solves spent on the costate search.
    pub evaluations: usize,
}

/// Full-route start state, heuristic and horizon grid of a scenario.
pub fn route_setup(scenario: &Scenario, config: &MpcConfig) -> Result<(SpeedProfile, State, HorizonGrid, Vec<f64>)> {
    let limits = scenario.limits();
    let heuristic = heuristic_velocity(&scenario.profile, &scenario.params, &limits, config.v_cruise, config.ds)?;
    let initial = State { t: 0.0, energy: heuristic.energy[0], accel: 0.0 };
    let grid = HorizonGrid::on_route(&scenario.profile, &scenario.params, 0.0, scenario.profile.length(), config.ds)?;
    let e_hat = (0..=grid.n).map(|k| heuristic.energy_at(grid.position(k))).collect();
    Ok((heuristic, initial, grid, e_hat))
}

/// Converged full-route plan at fixed `lambda`, seeded from `e_hat`.
pub fn solve_at_lambda(
    scenario: &Scenario,
    config: &MpcConfig,
    grid: &HorizonGrid,
    initial: &State,
    e_hat: &[f64],
    lambda: f64,
) -> Result<SqpResult> {
    let coeffs = scenario.coeffs(config.w1, config.w2, lambda);
    sqp_solve(
        grid,
        &coeffs,
        &scenario.powertrain.limits,
        &scenario.params,
        initial,
        e_hat,
        config.beta,
        config.sqp_max_iter,
        &config.solver(),
    )
}

/// Whole-route plan whose travel time meets `budget` (the heuristic time
/// when `None`), with λ found by the Illinois variant of regula falsi.
pub fn solve_reference(scenario: &Scenario, config: &MpcConfig, budget: Option<f64>) -> Result<ReferenceSolution> {
    config.validate()?;
    let (heuristic, initial, grid, e_hat) = route_setup(scenario, config)?;
    let budget = budget.unwrap_or_else(|| heuristic.travel_time(0.0, scenario.profile.length()));
    let tol = 1e-6 * budget;
    let mut evaluations = 0;
    let mut seed = e_hat;
    let mut eval = |l: f64| -> Result<(f64, SqpResult)> {
        let r = solve_at_lambda(scenario, config, &grid, &initial, &seed, l)?;
        evaluations += 1;
        seed = r.e_hat.clone();
        Ok((r.travel_time - budget, r))
    };
    let finish = |lambda: f64, sqp: SqpResult, evaluations: usize| ReferenceSolution {
        lambda,
        trajectory: plan_trajectory(&sqp.plan, 0.0, grid.ds, 0.0, &scenario.powertrain, scenario.params.mass),
        sqp,
        budget,
        evaluations,
    };

    let (mut f_lo, r0) = eval(0.0)?;
    if f_lo <= tol {
        return Ok(finish(0.0, r0, evaluations));
    }
    let mut lo = 0.0;
    let mut hi = match config.lambda_max {
        Some(l) => l,
        None => find_lambda_max(scenario, config, &grid, &initial, &r0.e_hat)?.0,
    };
    let (mut f_hi, mut best) = eval(hi)?;
    while f_hi > 0.0 {
        if hi > 1e3 {
            return Err(Error::Infeasible(format!("no costate meets the {budget:.1} s budget")));
        }
        lo = hi;
        f_lo = f_hi;
        hi *= 2.0;
        (f_hi, best) = eval(hi)?;
    }
    let mut best_lambda = hi;
    let mut side = 0i8;
    for _ in 0..60 {
        if f_hi.abs() <= tol && f_hi <= 0.0 {
            break;
        }
        let mid = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        let (fm, r) = eval(mid)?;
        debug!("reference: lambda {mid:.6} gives f = {fm:.4} s");
        if fm > 0.0 {
            lo = mid;
            f_lo = fm;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = mid;
            f_hi = fm;
            best = r;
            best_lambda = mid;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
            if fm.abs() <= tol {
                break;
            }
        }
        if (hi - lo) <= 1e-12 * hi {
            break;
        }
    }
    Ok(finish(best_lambda, best, evaluations))
}

/// One point of the comfort trade-off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub w2: f64,
    pub lambda: f64,
    /// Time-domain RMS jerk [m/s³].
    pub j_rms: f64,
    pub energy_cost: f64,
    pub drivability_cost: f64,
    pub arrival_time: f64,
}

fn sweep_point(scenario: &Scenario, config: &MpcConfig, w2: f64) -> Result<SweepPoint> {
    let cfg = MpcConfig { w2, ..config.clone() };
    let r = solve_reference(scenario, &cfg, None)?;
    let c = CostBreakdown::evaluate(&r.trajectory, &scenario.coeffs(cfg.w1, w2, 0.0));
    Ok(SweepPoint {
        w2,
        lambda: r.lambda,
        j_rms: c.j_rms,
        energy_cost: c.energy_cost,
        drivability_cost: c.drivability_cost,
        arrival_time: c.arrival_time,
    })
}

/// Reference plans for each jerk weight, solved concurrently.
pub fn sweep_w2(scenario: &Scenario, config: &MpcConfig, weights: &[f64]) -> Result<Vec<SweepPoint>> {
    weights.par_iter().map(|w| sweep_point(scenario, config, *w)).collect()
}

/// Jerk weight whose reference plan reaches `target` RMS jerk, by bisection
/// in `log w2` over `[lo, hi]`.
pub fn calibrate_w2(scenario: &Scenario, config: &MpcConfig, target: f64, lo: f64, hi: f64) -> Result<SweepPoint> {
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let pa = sweep_point(scenario, config, lo)?;
    let pb = sweep_point(scenario, config, hi)?;
    if !(pa.j_rms >= target && pb.j_rms <= target) {
        return Err(Error::InvalidParams(format!(
            "target RMS jerk {target} is not bracketed by [{}, {}]",
            pb.j_rms, pa.j_rms
        )));
    }
    let mut best = if (pa.j_rms - target).abs() < (pb.j_rms - target).abs() { pa } else { pb };
    for _ in 0..20 {
        let mid = 0.5 * (a + b);
        let p = sweep_point(scenario, config, mid.exp())?;
        if (p.j_rms - target).abs() < (best.j_rms - target).abs() {
            best = p;
        }
        if (p.j_rms - target).abs() <= 0.01 * target {
            break;
        }
        if p.j_rms > target {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(best)
}

/// Heuristic driving and two MPC runs, with and without the jerk penalty.
#[derive(Debug, Clone)]
pub struct CaseComparison {
    pub hg: Trajectory,
    pub case1: MpcRun,
    pub case2: MpcRun,
    pub summary: CaseSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub hg: CostBreakdown,
    pub case1: CostBreakdown,
    pub case2: CostBreakdown,
    /// Jerk weight of case 2, also used to price the heuristic's jerk.
    pub w2: f64,
}

/// Runs the three cases; the two MPC legs run concurrently.
pub fn compare_cases(scenario: &Scenario, config: &MpcConfig, w2: f64) -> Result<CaseComparison> {
    let c1 = MpcConfig { w2: 0.0, ..config.clone() };
    let c2 = MpcConfig { w2, ..config.clone() };
    let (r1, r2) = rayon::join(|| run_mpc(scenario, &c1), || run_mpc(scenario, &c2));
    let (case1, case2) = (r1?, r2?);
    let speed = &case1.heuristic;
    let hg = heuristic_trajectory(
        speed,
        &scenario.profile,
        &scenario.params,
        &scenario.powertrain,
        &scenario.coeffs(0.0, w2, 0.0),
    )?;
    let base = CostBreakdown::evaluate(&hg, &scenario.coeffs(config.w1, w2, 0.0));
    let summary = CaseSummary {
        hg: base,
        case1: CostBreakdown::evaluate(&case1.trajectory, &scenario.coeffs(config.w1, 0.0, 0.0)).against(&base),
        case2: CostBreakdown::evaluate(&case2.trajectory, &scenario.coeffs(config.w1, w2, 0.0)).against(&base),
        w2,
    };
    Ok(CaseComparison { hg, case1, case2, summary })
}
