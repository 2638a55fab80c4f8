//! One QP per update (real-time iteration) and the full SQP loop built on it.

use std::time::Instant;

use log::debug;

use crate::error::{Error, Result};
use crate::model::{Control, State, Trajectory, TrajectoryPoint, VehicleParams};
use crate::ocp::{assemble_qp, HorizonGrid, HorizonPlan, StageCostCoeffs};
use crate::powertrain::{ForceLimitFit, Powertrain};
use crate::qp::{solve, QpSolution, QpStatus, SolverOptions};

/// Residual level at which an iteration-capped QP is still accepted.
const MAX_ITER_ACCEPT: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct RtiOutput {
    pub plan: HorizonPlan,
    /// Linearisation trajectory for the next iteration.
    pub e_hat: Vec<f64>,
    /// First-interval control.
    pub control: Control,
    /// `None` for an empty horizon.
    pub solution: Option<QpSolution>,
    /// The comfort bounds had to be relaxed to obtain a solution.
    pub degraded: bool,
    pub solve_ms: f64,
    /// Exact λ-adjoined cost of the plan [EUR].
    pub cost: f64,
    /// Predicted travel time over the horizon [s].
    pub travel_time: f64,
}

fn relaxed(params: &VehicleParams) -> VehicleParams {
    // comfort bounds wide enough that only the force limits bind
    VehicleParams {
        accel_min: -10.0,
        accel_max: 10.0,
        jerk_min: 100.0 * params.jerk_min,
        jerk_max: 100.0 * params.jerk_max,
        ..params.clone()
    }
}

fn solve_once(
    grid: &HorizonGrid,
    coeffs: &StageCostCoeffs,
    fit: &ForceLimitFit,
    params: &VehicleParams,
    e_hat: &[f64],
    initial: &State,
    opts: &SolverOptions,
) -> Result<Option<(HorizonPlan, QpSolution)>> {
    let qp = assemble_qp(grid, coeffs, fit, params, e_hat, initial)?;
    let sol = solve(&qp.problem, None, opts)?;
    match sol.status {
        QpStatus::Optimal => {}
        QpStatus::MaxIter if sol.residuals.max() <= MAX_ITER_ACCEPT => {}
        QpStatus::MaxIter => {
            return Err(Error::Solver(format!(
                "QP stopped after {} iterations with residual {:.2e}",
                sol.iterations,
                sol.residuals.max()
            )));
        }
        QpStatus::Infeasible => return Ok(None),
    }
    Ok(Some((qp.plan(&sol.x), sol)))
}

/// Assembles and solves one QP about `e_hat`, then moves the linearisation
/// by `Ê ← Ê + β(E* − Ê)`. An infeasible QP is retried once with relaxed
/// comfort bounds and reported as degraded.
#[allow(clippy::too_many_arguments)]
pub fn rti_step(
    grid: &HorizonGrid,
    coeffs: &StageCostCoeffs,
    fit: &ForceLimitFit,
    params: &VehicleParams,
    initial: &State,
    e_hat: &[f64],
    beta: f64,
    opts: &SolverOptions,
) -> Result<RtiOutput> {
    if grid.n == 0 {
        return Ok(RtiOutput {
            plan: HorizonPlan {
                energy: vec![initial.energy],
                accel: vec![initial.accel],
                jerk: vec![],
                force: vec![],
                brake: vec![],
            },
            e_hat: vec![initial.energy],
            control: Control { jerk: 0.0, brake: 0.0 },
            solution: None,
            degraded: false,
            solve_ms: 0.0,
            cost: 0.0,
            travel_time: 0.0,
        });
    }
    if e_hat.len() != grid.n + 1 {
        return Err(Error::Dimension(format!("need {} linearisation energies, got {}", grid.n + 1, e_hat.len())));
    }
    let mut lin = e_hat.to_vec();
    lin[0] = initial.energy;
    let clock = Instant::now();
    let mut degraded = false;
    let (plan, sol) = match solve_once(grid, coeffs, fit, params, &lin, initial, opts)? {
        Some(found) => found,
        None => {
            debug!("QP infeasible at s = {} m, relaxing comfort bounds", grid.start);
            degraded = true;
            solve_once(grid, coeffs, fit, &relaxed(params), &lin, initial, opts)?.ok_or_else(|| {
                Error::Infeasible(format!(
                    "horizon QP at s = {} m is infeasible even with relaxed comfort bounds",
                    grid.start
                ))
            })?
        }
    };
    let solve_ms = clock.elapsed().as_secs_f64() * 1e3;
    let next: Vec<f64> = lin.iter().zip(&plan.energy).map(|(e, p)| e + beta * (p - e)).collect();
    Ok(RtiOutput {
        control: Control { jerk: plan.jerk[0], brake: plan.brake[0] },
        cost: plan.cost(grid.ds, coeffs)?,
        travel_time: plan.travel_time(grid.ds, params.mass),
        plan,
        e_hat: next,
        solution: Some(sol),
        degraded,
        solve_ms,
    })
}

#[derive(Debug, Clone)]
pub struct SqpResult {
    pub plan: HorizonPlan,
    /// Exact cost of each accepted iterate.
    pub costs: Vec<f64>,
    /// QPs solved, including rejected trial steps.
    pub qp_solves: usize,
    pub converged: bool,
    pub travel_time: f64,
    pub e_hat: Vec<f64>,
    pub degraded: bool,
}

impl SqpResult {
    pub fn iterations(&self) -> usize {
        self.costs.len()
    }

    pub fn cost(&self) -> f64 {
        *self.costs.last().unwrap_or(&0.0)
    }
}

/// Repeats [`rti_step`] at a frozen position until the relative cost change
/// drops below `1e-6`. A cost increase halves β and retries from the last
/// accepted linearisation, at most three times in a row.
#[allow(clippy::too_many_arguments)]
pub fn sqp_solve(
    grid: &HorizonGrid,
    coeffs: &StageCostCoeffs,
    fit: &ForceLimitFit,
    params: &VehicleParams,
    initial: &State,
    e_hat: &[f64],
    beta: f64,
    max_iter: usize,
    opts: &SolverOptions,
) -> Result<SqpResult> {
    let mut step = rti_step(grid, coeffs, fit, params, initial, e_hat, beta, opts)?;
    let mut degraded = step.degraded;
    let mut costs = vec![step.cost];
    let mut qp_solves = 1;
    let mut converged = grid.n == 0;
    // accepted linearisation and the QP solution obtained there
    let mut base = e_hat.to_vec();
    base[0] = initial.energy;
    while !converged && costs.len() < max_iter {
        let mut b = beta;
        let mut halvings = 0;
        let trial = loop {
            let lin: Vec<f64> = base.iter().zip(&step.plan.energy).map(|(e, p)| e + b * (p - e)).collect();
            let t = rti_step(grid, coeffs, fit, params, initial, &lin, beta, opts)?;
            qp_solves += 1;
            if t.cost <= step.cost * (1.0 + 1e-12) || halvings == 3 {
                break (lin, t);
            }
            b *= 0.5;
            halvings += 1;
        };
        let prev = step.cost;
        (base, step) = trial;
        degraded |= step.degraded;
        costs.push(step.cost);
        converged = ((step.cost - prev) / prev.abs().max(f64::MIN_POSITIVE)).abs() < 1e-6;
    }
    Ok(SqpResult {
        travel_time: step.travel_time,
        e_hat: step.e_hat.clone(),
        plan: step.plan,
        costs,
        qp_solves,
        converged,
        degraded,
    })
}

/// Trajectory of a horizon plan starting at position `s0` and time `t0`;
/// time advances by left Euler, `t_{k+1} = t_k + Δs / v_k`.
pub fn plan_trajectory(
    plan: &HorizonPlan,
    s0: f64,
    ds: f64,
    t0: f64,
    powertrain: &Powertrain,
    mass: f64,
) -> Trajectory {
    let n = plan.intervals();
    let mut t = t0;
    let mut points = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let i = k.min(n.saturating_sub(1));
        let (jerk, force, brake) = if n == 0 { (0.0, 0.0, 0.0) } else { (plan.jerk[i], plan.force[i], plan.brake[i]) };
        let energy = plan.energy[k];
        let v = (2.0 * energy / mass).sqrt();
        points.push(TrajectoryPoint {
            s: s0 + k as f64 * ds,
            t,
            energy,
            v,
            accel: plan.accel[k],
            jerk,
            force,
            brake,
            gear: powertrain.gear_for(energy, force),
        });
        t += ds / v;
    }
    Trajectory { ds, points }
}
