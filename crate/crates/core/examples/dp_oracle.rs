//! Cross-checks a converged horizon plan against dynamic programming on
//! successively finer energy lattices.
//!
//! `cargo run --release --example dp_oracle`

use ecodrive::model::{RoadProfile, State, SyntheticRoute, VehicleParams};
use ecodrive::mpc::{sqp_solve, MpcConfig, Scenario};
use ecodrive::ocp::{fuel_price_per_joule, HorizonGrid};
use ecodrive::oracle::{dp_solve, DpGrid};
use ecodrive::powertrain::{Powertrain, PowertrainConfig, PowertrainKind};

fn main() -> ecodrive::Result<()> {
    let params = VehicleParams::heavy_truck();
    let powertrain =
        Powertrain::synthesize(PowertrainKind::Cv, &params, &PowertrainConfig::for_kind(PowertrainKind::Cv))?;
    let profile = RoadProfile::synthetic(&SyntheticRoute { length: 20_000.0, ..SyntheticRoute::default() })?;
    let sc = Scenario { params, profile, powertrain, energy_price: fuel_price_per_joule(1.51) };

    let grid = HorizonGrid::on_route(&sc.profile, &sc.params, 12_000.0, 6_000.0, 300.0)?;
    let coeffs = sc.coeffs(0.0, 0.0, 0.007);
    let e0 = sc.energy(75.0 / 3.6);
    let initial = State { t: 0.0, energy: e0, accel: 0.0 };
    let sqp = sqp_solve(
        &grid,
        &coeffs,
        &sc.powertrain.limits,
        &sc.params,
        &initial,
        &vec![e0; grid.n + 1],
        1.0,
        30,
        &MpcConfig::default().solver(),
    )?;
    println!("SQP cost {:.5} EUR over {} intervals", sqp.cost(), grid.n);

    let limits = sc.limits();
    for levels in [21, 41, 81] {
        let dp = dp_solve(
            &grid,
            &coeffs,
            &limits,
            &sc.params,
            &initial,
            &DpGrid { energy_levels: levels, ..DpGrid::default() },
        )?;
        let gap = 100.0 * (dp.lattice_cost - sqp.cost()).abs() / sqp.cost().abs();
        println!(
            "  DP {levels:>2} energy levels: lattice {:.5}, rollout {:.5}, gap {gap:.3}%",
            dp.lattice_cost, dp.cost
        );
    }
    Ok(())
}
