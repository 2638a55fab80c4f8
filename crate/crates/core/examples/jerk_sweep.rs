//! Trades energy against ride comfort by sweeping the jerk weight of the
//! whole-route reference plan.
//!
//! `cargo run --release --example jerk_sweep`

use ecodrive::model::{RoadProfile, SyntheticRoute, VehicleParams};
use ecodrive::mpc::{sweep_w2, MpcConfig, Scenario};
use ecodrive::ocp::fuel_price_per_joule;
use ecodrive::powertrain::{Powertrain, PowertrainConfig, PowertrainKind};

fn main() -> ecodrive::Result<()> {
    let params = VehicleParams::heavy_truck();
    let powertrain =
        Powertrain::synthesize(PowertrainKind::Cv, &params, &PowertrainConfig::for_kind(PowertrainKind::Cv))?;
    let length = 30_000.0;
    let profile = RoadProfile::synthetic(&SyntheticRoute { length, ..SyntheticRoute::default() })?;
    let sc = Scenario { params, profile, powertrain, energy_price: fuel_price_per_joule(1.51) };

    let weights = [0.0, 10.0, 50.0, 200.0, 1e3, 1e4];
    let points = sweep_w2(&sc, &MpcConfig { horizon: length, ..MpcConfig::default() }, &weights)?;
    println!("{:>8}{:>10}{:>10}{:>10}{:>10}", "w2", "lambda", "j_rms", "energy", "arrival");
    for p in points {
        println!("{:>8}{:>10.5}{:>10.5}{:>10.3}{:>10.1}", p.w2, p.lambda, p.j_rms, p.energy_cost, p.arrival_time);
    }
    Ok(())
}
