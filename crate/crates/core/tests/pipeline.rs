//! End-to-end runs on a short synthetic route: reference planning, closed
//! loop with plan audits, and cross-checks of the banded solver.

use ecodrive::model::{RoadProfile, SyntheticRoute, VehicleParams};
use ecodrive::mpc::{run_mpc, solve_reference, MpcConfig, Scenario};
use ecodrive::ocp::{electricity_price_per_joule, fuel_price_per_joule};
use ecodrive::oracle::{dense_qp_solve, random_banded_qp};
use ecodrive::powertrain::{Powertrain, PowertrainConfig, PowertrainKind};
use ecodrive::qp::{solve, QpStatus, SolverOptions};

const LENGTH: f64 = 20_000.0;

fn scenario(kind: PowertrainKind) -> Scenario {
    let params = match kind {
        PowertrainKind::Cv => VehicleParams::heavy_truck(),
        PowertrainKind::Ev => VehicleParams::electric_truck(),
    };
    let powertrain = Powertrain::synthesize(kind, &params, &PowertrainConfig::for_kind(kind)).unwrap();
    let energy_price = match kind {
        PowertrainKind::Cv => fuel_price_per_joule(1.51),
        PowertrainKind::Ev => electricity_price_per_joule(0.18),
    };
    let profile =
        RoadProfile::synthetic(&SyntheticRoute { length: LENGTH, seed: 11, ..SyntheticRoute::default() }).unwrap();
    Scenario { params, profile, powertrain, energy_price }
}

fn short_config() -> MpcConfig {
    MpcConfig { horizon: LENGTH, ds: 200.0, update_step: 200.0, ..MpcConfig::default() }
}

#[test]
fn cv_optimum_never_drives_and_brakes_together() {
    let sc = scenario(PowertrainKind::Cv);
    let reference = solve_reference(&sc, &short_config(), None).unwrap();
    let worst = reference.trajectory.points.iter().map(|p| p.force.min(-p.brake)).fold(f64::NEG_INFINITY, f64::max);
    assert!(worst <= 10.0, "traction and brake overlap by {worst} N");
    assert!((reference.sqp.travel_time - reference.budget).abs() <= 1e-5 * reference.budget);
}

#[test]
fn closed_loop_meets_the_budget_with_feasible_plans() {
    for kind in [PowertrainKind::Cv, PowertrainKind::Ev] {
        let sc = scenario(kind);
        let run = run_mpc(&sc, &MpcConfig { audit: true, ..short_config() }).unwrap();
        let arrival = run.arrival_time();
        assert!((arrival / run.t_f - 1.0).abs() <= 1e-3, "{kind:?}: arrival {arrival} vs budget {}", run.t_f);
        let audit = run.audit_max.unwrap();
        assert!(audit <= 1e-6, "{kind:?}: audit {audit}");
        assert_eq!(run.degraded_updates, 0);
        assert!(run.log.iter().all(|r| r.lambda >= 0.0 && r.lambda <= run.lambda_max));
        let end = run.trajectory.points.last().unwrap();
        assert!((end.s - LENGTH).abs() < 1e-6);
    }
}

#[test]
fn closed_loop_is_deterministic() {
    let sc = scenario(PowertrainKind::Cv);
    let cfg = short_config();
    let a = run_mpc(&sc, &cfg).unwrap();
    let b = run_mpc(&sc, &cfg).unwrap();
    assert_eq!(a.trajectory, b.trajectory);
    assert_eq!(a.lambdas(), b.lambdas());
}

#[test]
fn banded_solver_agrees_with_dense_active_set() {
    for seed in 0..8 {
        let (p, x0) = random_banded_qp(30, seed);
        let banded = solve(&p, None, &SolverOptions::default()).unwrap();
        assert_eq!(banded.status, QpStatus::Optimal);
        let dense = dense_qp_solve(&p, &x0, 1e-12).unwrap();
        let scale = dense.objective.abs().max(1.0);
        assert!((banded.objective - dense.objective).abs() <= 1e-6 * scale, "seed {seed}");
        let dx = banded.x.iter().zip(&dense.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dx <= 1e-4, "seed {seed}: primal gap {dx}");
    }
}
