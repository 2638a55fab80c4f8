//! Synthesises the diesel and electric powertrains and prints the fitted
//! power surrogate and force-limit lines.
//!
//! `cargo run --release --example fit_maps`

use ecodrive::model::VehicleParams;
use ecodrive::powertrain::{artifact, Powertrain, PowertrainConfig, PowertrainKind};

fn main() -> ecodrive::Result<()> {
    for (kind, params) in
        [(PowertrainKind::Cv, VehicleParams::heavy_truck()), (PowertrainKind::Ev, VehicleParams::electric_truck())]
    {
        let pt = Powertrain::synthesize(kind, &params, &PowertrainConfig::for_kind(kind))?;
        let [p0, p1, p2, p3] = pt.power.coeffs;
        println!("{kind}");
        println!("  P(v, F) = {p0:.4e} + {p1:.4e} v^3 + {p2:.4e} vF + {p3:.4e} vF^2");
        println!(
            "  fit residual: max {:.2}%, mean {:.2}% over {} samples",
            100.0 * pt.power.residual.max_rel,
            100.0 * pt.power.residual.mean_rel,
            pt.power.residual.samples
        );
        let l = &pt.limits;
        println!("  force limits on [{:.1}, {:.1}] m/s:", l.v0, l.v1);
        for kmh in [40.0, 60.0, 80.0] {
            let v = kmh / 3.6;
            println!("    {kmh:>4} km/h: F in [{:>8.0}, {:>8.0}] N", l.force_min_at_speed(v), l.force_max_at_speed(v));
        }
        println!("  power_fit.json is {} bytes", artifact::to_json(&pt.power)?.len());
    }
    Ok(())
}
