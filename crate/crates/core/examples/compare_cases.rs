//! Heuristic driving against MPC without and with a jerk penalty, for both
//! powertrains on a 40 km route.
//!
//! `cargo run --release --example compare_cases`

use ecodrive::model::{RoadProfile, SyntheticRoute, VehicleParams};
use ecodrive::mpc::{compare_cases, MpcConfig, Scenario};
use ecodrive::ocp::{electricity_price_per_joule, fuel_price_per_joule};
use ecodrive::powertrain::{Powertrain, PowertrainConfig, PowertrainKind};

fn main() -> ecodrive::Result<()> {
    let length = 40_000.0;
    for kind in [PowertrainKind::Cv, PowertrainKind::Ev] {
        let (params, energy_price) = match kind {
            PowertrainKind::Cv => (VehicleParams::heavy_truck(), fuel_price_per_joule(1.51)),
            PowertrainKind::Ev => (VehicleParams::electric_truck(), electricity_price_per_joule(0.18)),
        };
        let powertrain = Powertrain::synthesize(kind, &params, &PowertrainConfig::for_kind(kind))?;
        let profile = RoadProfile::synthetic(&SyntheticRoute { length, ..SyntheticRoute::default() })?;
        let sc = Scenario { params, profile, powertrain, energy_price };
        let cmp = compare_cases(&sc, &MpcConfig { horizon: length, ..MpcConfig::default() }, 50.0)?;

        println!("{kind}  (jerk weight {} EUR s^4/m)", cmp.summary.w2);
        println!(
            "  {:<6}{:>10}{:>10}{:>10}{:>9}{:>10}{:>10}",
            "case", "energy", "comfort", "total", "saving", "j_rms", "arrival"
        );
        for (name, c) in [("hg", cmp.summary.hg), ("case1", cmp.summary.case1), ("case2", cmp.summary.case2)] {
            println!(
                "  {name:<6}{:>10.3}{:>10.3}{:>10.3}{:>8.2}%{:>10.5}{:>10.1}",
                c.energy_cost, c.drivability_cost, c.total_cost, c.improvement_pct, c.j_rms, c.arrival_time
            );
        }
    }
    Ok(())
}
