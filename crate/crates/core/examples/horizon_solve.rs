//! Solves one 6 km horizon to convergence at a fixed time price and then
//! traces how the predicted travel time responds to that price.
//!
//! `cargo run --release --example horizon_solve`

use ecodrive::model::{RoadProfile, State, SyntheticRoute, VehicleParams};
use ecodrive::mpc::{f_curve, sqp_solve, MpcConfig, Scenario};
use ecodrive::ocp::{fuel_price_per_joule, HorizonGrid};
use ecodrive::powertrain::{Powertrain, PowertrainConfig, PowertrainKind};

fn main() -> ecodrive::Result<()> {
    let params = VehicleParams::heavy_truck();
    let powertrain =
        Powertrain::synthesize(PowertrainKind::Cv, &params, &PowertrainConfig::for_kind(PowertrainKind::Cv))?;
    let profile = RoadProfile::synthetic(&SyntheticRoute { length: 20_000.0, ..SyntheticRoute::default() })?;
    let sc = Scenario { params, profile, powertrain, energy_price: fuel_price_per_joule(1.51) };
    let cfg = MpcConfig::default();

    let grid = HorizonGrid::on_route(&sc.profile, &sc.params, 4_000.0, 6_000.0, 200.0)?;
    let e0 = sc.energy(75.0 / 3.6);
    let initial = State { t: 0.0, energy: e0, accel: 0.0 };
    let e_hat = vec![e0; grid.n + 1];
    let coeffs = sc.coeffs(0.0, 0.0, 0.007);
    let r = sqp_solve(&grid, &coeffs, &sc.powertrain.limits, &sc.params, &initial, &e_hat, 1.0, 30, &cfg.solver())?;
    println!("N = {}, converged {} after {} iterations", grid.n, r.converged, r.iterations());
    println!("cost {:.4} EUR, travel time {:.1} s", r.cost(), r.travel_time);
    for k in (0..=grid.n).step_by(5) {
        let v = (2.0 * r.plan.energy[k] / sc.params.mass).sqrt() * 3.6;
        println!("  s = {:>5.0} m  v = {v:5.1} km/h  a = {:+.3} m/s2", grid.position(k), r.plan.accel[k]);
    }

    let budget = r.travel_time;
    let lambdas = [0.0, 0.004, 0.007, 0.01, 0.02];
    let f = f_curve(&sc, &cfg, &grid, &initial, &r.e_hat, budget, &lambdas)?;
    println!("\ntime surplus against a {budget:.1} s budget:");
    for (l, f) in lambdas.iter().zip(f) {
        println!("  lambda {l:.3} EUR/s -> {f:+7.2} s");
    }
    Ok(())
}
