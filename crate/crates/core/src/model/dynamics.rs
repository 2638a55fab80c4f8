//! Longitudinal force balance in the kinetic-energy domain.
//!
//! With distance as the independent variable and `E = m v² / 2` as state:
//!
//! ```text
//! t' = sqrt(m / 2E)      E' = m a      a' = j
//! m a = F + F_brk - k_E E - F_α,   k_E = 2 c_a / m
//! ```

use super::params::VehicleParams;
use super::road::{grade_force, RoadProfile};
use crate::error::{Error, Result};

/// `E = m v² / 2`.
pub fn kinetic_energy(v: f64, params: &VehicleParams) -> Result<f64> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::domain(format!("speed must be positive, got {v}")));
    }
    Ok(0.5 * params.mass * v * v)
}

/// Inverse of [`kinetic_energy`].
pub fn speed_of(energy: f64, params: &VehicleParams) -> Result<f64> {
    if !(energy > 0.0 && energy.is_finite()) {
        return Err(Error::domain(format!("kinetic energy must be positive, got {energy}")));
    }
    Ok((2.0 * energy / params.mass).sqrt())
}

/// dt/ds = sqrt(m / 2E) = 1/v.
pub fn time_slope(energy: f64, params: &VehicleParams) -> Result<f64> {
    if !(energy > 0.0 && energy.is_finite()) {
        return Err(Error::domain(format!("kinetic energy must be positive, got {energy}")));
    }
    Ok((params.mass / (2.0 * energy)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResistiveForces {
    pub air: f64,
    pub grade: f64,
}

impl ResistiveForces {
    pub fn total(&self) -> f64 {
        self.air + self.grade
    }
}

pub fn resistive_forces(energy: f64, s: f64, profile: &RoadProfile, params: &VehicleParams) -> Result<ResistiveForces> {
    if !(energy > 0.0) {
        return Err(Error::domain(format!("kinetic energy must be positive, got {energy}")));
    }
    let grade = grade_force(profile.grade_at(s)?, params);
    Ok(ResistiveForces { air: params.drag_per_energy() * energy, grade })
}

/// Traction force needed for acceleration `a`, given the braking force and
/// grade resistance.
pub fn traction_force(a: f64, energy: f64, brake: f64, grade: f64, params: &VehicleParams) -> f64 {
    params.mass * a + params.drag_per_energy() * energy - brake + grade
}

/// Acceleration produced by traction force `force`; inverse of [`traction_force`].
pub fn accel_of(force: f64, energy: f64, brake: f64, grade: f64, params: &VehicleParams) -> f64 {
    (force + brake - params.drag_per_energy() * energy - grade) / params.mass
}

/// Traction force envelope of a powertrain as a function of kinetic energy.
pub trait TractionLimits {
    fn force_max(&self, energy: f64) -> f64;
    fn force_min(&self, energy: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelLimits {
    pub min: f64,
    pub max: f64,
}

impl AccelLimits {
    pub fn is_feasible(&self) -> bool {
        self.min <= self.max
    }
}

/// Acceleration band from comfort bounds and the traction envelope.
///
/// An empty band is returned as-is; use [`AccelLimits::is_feasible`].
pub fn accel_limits(energy: f64, grade: f64, limits: &dyn TractionLimits, params: &VehicleParams) -> AccelLimits {
    let drag = params.drag_per_energy() * energy;
    let lo = (limits.force_min(energy) - drag + params.brake_force_min - grade) / params.mass;
    let hi = (limits.force_max(energy) - drag - grade) / params.mass;
    AccelLimits { min: params.accel_min.max(lo), max: params.accel_max.min(hi) }
}
