//! Times the banded QP solve against the number of samples and fits a line
//! through the medians.
//!
//! `cargo run --release --example timing_bench`

use ecodrive::cli::{bench_qp, line_fit};
use ecodrive::model::{RoadProfile, SyntheticRoute, VehicleParams};
use ecodrive::mpc::{MpcConfig, Scenario};
use ecodrive::ocp::fuel_price_per_joule;
use ecodrive::powertrain::{Powertrain, PowertrainConfig, PowertrainKind};

fn main() -> ecodrive::Result<()> {
    let params = VehicleParams::heavy_truck();
    let powertrain =
        Powertrain::synthesize(PowertrainKind::Cv, &params, &PowertrainConfig::for_kind(PowertrainKind::Cv))?;
    let profile = RoadProfile::synthetic(&SyntheticRoute::default())?;
    let sc = Scenario { params, profile, powertrain, energy_price: fuel_price_per_joule(1.51) };

    let ns: Vec<usize> = (1..=8).map(|k| 50 * k).collect();
    let mut ms = Vec::new();
    for &n in &ns {
        let t = bench_qp(&sc, &MpcConfig::default(), n, 5, 0.007)?;
        println!("N = {n:>3}: {t:7.2} ms");
        ms.push(t);
    }
    let xs: Vec<f64> = ns.iter().map(|n| *n as f64).collect();
    let fit = line_fit(&xs, &ms);
    println!("{:.4} ms per sample + {:.2} ms, R^2 = {:.3}", fit.slope, fit.intercept, fit.r_squared);
    Ok(())
}
