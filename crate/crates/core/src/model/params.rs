use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lumped longitudinal vehicle parameters. All values SI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Total lumped mass [kg].
    pub mass: f64,
    /// Frontal area [m²].
    pub frontal_area: f64,
    /// Aerodynamic drag coefficient [-].
    pub drag_coeff: f64,
    /// Air density [kg/m³].
    pub air_density: f64,
    /// Rolling resistance coefficient [-].
    pub rolling_coeff: f64,
    /// Gravitational acceleration [m/s²].
    pub gravity: f64,
    /// Wheel radius [m].
    pub wheel_radius: f64,
    /// Final drive ratio [-].
    pub final_gear_ratio: f64,
    /// Transmission ratio per gear, gear 1 first, strictly decreasing.
    pub transmission_ratios: Vec<f64>,
    /// Comfort acceleration band [m/s²].
    pub accel_min: f64,
    pub accel_max: f64,
    /// Space-domain jerk band, d a / d s [(m/s²)/m].
    pub jerk_min: f64,
    pub jerk_max: f64,
    /// Most negative total braking force [N].
    pub brake_force_min: f64,
}

impl VehicleParams {
    /// 40 t tractor-semitrailer with a 12-speed gearbox.
    pub fn heavy_truck() -> Self {
        let cruise = 80.0 / 3.6;
        Self {
            mass: 40_000.0,
            frontal_area: 10.0,
            drag_coeff: 0.5,
            air_density: 1.29,
            rolling_coeff: 0.006,
            gravity: 9.81,
            wheel_radius: 0.5,
            final_gear_ratio: 3.0,
            transmission_ratios: vec![14.94, 11.73, 9.04, 7.09, 5.54, 4.35, 3.44, 2.70, 2.08, 1.63, 1.27, 1.00],
            accel_min: -1.5,
            accel_max: 1.5,
            jerk_min: -1.0 / cruise,
            jerk_max: 1.0 / cruise,
            brake_force_min: -100_000.0,
        }
    }

    /// Same chassis with a single-ratio electric drive.
    pub fn electric_truck() -> Self {
        Self { transmission_ratios: vec![4.0], ..Self::heavy_truck() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("frontal_area", self.frontal_area),
            ("drag_coeff", self.drag_coeff),
            ("air_density", self.air_density),
            ("gravity", self.gravity),
            ("wheel_radius", self.wheel_radius),
            ("final_gear_ratio", self.final_gear_ratio),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.rolling_coeff >= 0.0) {
            return Err(Error::InvalidParams("rolling_coeff must be non-negative".into()));
        }
        if self.transmission_ratios.is_empty() {
            return Err(Error::InvalidParams("at least one gear ratio is required".into()));
        }
        if self.transmission_ratios.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::InvalidParams("gear ratios must be positive".into()));
        }
        if self.transmission_ratios.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParams("transmission ratios must be strictly decreasing".into()));
        }
        if !(self.accel_min < 0.0 && 0.0 < self.accel_max) {
            return Err(Error::InvalidParams("need accel_min < 0 < accel_max".into()));
        }
        if !(self.jerk_min < 0.0 && 0.0 < self.jerk_max) {
            return Err(Error::InvalidParams("need jerk_min < 0 < jerk_max".into()));
        }
        if !(self.brake_force_min <= 0.0) {
            return Err(Error::InvalidParams("brake_force_min must be <= 0".into()));
        }
        Ok(())
    }

    pub fn gear_count(&self) -> usize {
        self.transmission_ratios.len()
    }

    /// Overall wheel-to-shaft ratio R(γ) = r_w / (r_tg(γ) r_fg) [m], gear is 1-based.
    pub fn overall_ratio(&self, gear: usize) -> f64 {
        self.wheel_radius / (self.transmission_ratios[gear - 1] * self.final_gear_ratio)
    }

    /// ρ_a c_d A_f / 2 [kg/m], so that F_air = c_a v².
    pub fn drag_constant(&self) -> f64 {
        self.air_density * self.drag_coeff * self.frontal_area / 2.0
    }

    /// Coefficient of E in the force balance: F_air = k_E E with k_E = 2 c_a / m [1/m].
    pub fn drag_per_energy(&self) -> f64 {
        2.0 * self.drag_constant() / self.mass
    }

    /// Lowest admissible kinetic energy for a given minimum speed.
    pub fn energy_floor(&self, v_min: f64) -> f64 {
        let v = v_min.max(1.0);
        0.5 * self.mass * v * v
    }
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self::heavy_truck()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        VehicleParams::heavy_truck().validate().unwrap();
        VehicleParams::electric_truck().validate().unwrap();
    }

    #[test]
    fn rejects_non_decreasing_ratios() {
        let mut p = VehicleParams::heavy_truck();
        p.transmission_ratios = vec![3.0, 3.0];
        assert!(p.validate().is_err());
    }

    #[test]
    fn rejects_positive_brake_floor() {
        let mut p = VehicleParams::heavy_truck();
        p.brake_force_min = 10.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn top_gear_ratio() {
        let p = VehicleParams::heavy_truck();
        assert!((p.overall_ratio(12) - 0.5 / 3.0).abs() < 1e-15);
    }
}
