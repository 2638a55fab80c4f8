//! Drives 40 km in closed loop with real-time iterations and a shrinking
//! horizon, granting extra time halfway.
//!
//! `cargo run --release --example closed_loop_mpc`

use ecodrive::model::{RoadProfile, SyntheticRoute, VehicleParams};
use ecodrive::mpc::{run_mpc, Disturbance, MpcConfig, Scenario};
use ecodrive::ocp::fuel_price_per_joule;
use ecodrive::powertrain::{Powertrain, PowertrainConfig, PowertrainKind};

fn main() -> ecodrive::Result<()> {
    env_logger::init();
    let params = VehicleParams::heavy_truck();
    let powertrain =
        Powertrain::synthesize(PowertrainKind::Cv, &params, &PowertrainConfig::for_kind(PowertrainKind::Cv))?;
    let length = 40_000.0;
    let profile = RoadProfile::synthetic(&SyntheticRoute { length, ..SyntheticRoute::default() })?;
    let sc = Scenario { params, profile, powertrain, energy_price: fuel_price_per_joule(1.51) };

    let cfg = MpcConfig {
        horizon: length,
        audit: true,
        disturbance: Some(Disturbance { position: 0.5 * length, extra_time: 30.0 }),
        ..MpcConfig::default()
    };
    let run = run_mpc(&sc, &cfg)?;
    println!("budget {:.1} s -> {:.1} s, arrived at {:.1} s", run.t_f_initial, run.t_f, run.arrival_time());
    println!("worst audit violation {:.2e}, degraded updates {}", run.audit_max.unwrap_or(0.0), run.degraded_updates);
    for r in run.log.iter().step_by(10) {
        println!(
            "  zeta {:>6.0} m  lambda {:.5}  N {:>3}  qp iters {:>2}  {:.1} ms",
            r.zeta, r.lambda, r.horizon_intervals, r.qp_iters, r.solve_ms
        );
    }
    Ok(())
}
