//! Builds the gear-optimal map from a synthetic diesel actuator and prints
//! the chosen gear over a coarse speed/force lattice.
//!
//! `cargo run --release --example gear_map`

use ecodrive::model::VehicleParams;
use ecodrive::powertrain::{ActuatorMap, GearMap, PowertrainConfig, PowertrainKind, WheelTables};

fn main() -> ecodrive::Result<()> {
    let params = VehicleParams::heavy_truck();
    let cfg = PowertrainConfig::for_kind(PowertrainKind::Cv);
    let actuator = ActuatorMap::synthesize(PowertrainKind::Cv, cfg.rated_power, cfg.omega_idle, cfg.omega_max)?;
    let map = GearMap::optimise(&WheelTables::build(&actuator, &params, &cfg.grid)?);
    let (rows, cols) = map.shape();
    println!("{rows} x {cols} map, '.' marks an infeasible cell\n");

    let forces = [0.0, 5e3, 1e4, 2e4, 3e4, 4e4];
    print!("{:>8}", "km/h");
    for f in forces {
        print!("{:>7.0}", f / 1e3);
    }
    println!("   kN");
    for kmh in (20..=90).step_by(10) {
        let v = kmh as f64 / 3.6;
        let e = 0.5 * params.mass * v * v;
        print!("{kmh:>8}");
        for f in forces {
            match map.gear_at(e, f) {
                Some(g) => print!("{g:>7}"),
                None => print!("{:>7}", "."),
            }
        }
        println!();
    }
    Ok(())
}
