//! Cost, comfort and braking figures of a driven trajectory.

use serde::{Deserialize, Serialize};

use crate::model::Trajectory;
use crate::ocp::{energy_cost_rate, StageCostCoeffs};
use crate::powertrain::PowertrainKind;

fn trapezoid_rms(traj: &Trajectory, f: impl Fn(usize) -> f64) -> f64 {
    let pts = &traj.points;
    if pts.len() < 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    for k in 0..pts.len() - 1 {
        let (a, b) = (f(k), f(k + 1));
        acc += 0.5 * (pts[k + 1].s - pts[k].s) * (a * a + b * b);
    }
    let span = pts[pts.len() - 1].s - pts[0].s;
    (acc / span).sqrt()
}

/// `√((1/s_f) ∫ j² ds)` of the space-domain jerk `da/ds`.
pub fn rms_jerk_space(traj: &Trajectory) -> f64 {
    trapezoid_rms(traj, |k| traj.points[k].jerk)
}

/// The same average of the time-domain jerk `da/dt = v · da/ds` [m/s³].
pub fn rms_jerk(traj: &Trajectory) -> f64 {
    trapezoid_rms(traj, |k| traj.points[k].jerk * traj.points[k].v)
}

/// Euclidean norm of the friction-brake force over all intervals [kN]. For
/// an electric drive the regenerative share `min(F, 0)` is included.
pub fn brake_norm(traj: &Trajectory, kind: PowertrainKind) -> f64 {
    let n = traj.intervals();
    let sq: f64 = traj.points[..n]
        .iter()
        .map(|p| {
            let b = match kind {
                PowertrainKind::Cv => p.brake,
                PowertrainKind::Ev => p.brake + p.force.min(0.0),
            };
            b * b
        })
        .sum();
    sq.sqrt() / 1e3
}

/// Cost summary of one driven case [EUR].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub energy_cost: f64,
    pub drivability_cost: f64,
    pub total_cost: f64,
    /// Total-cost saving against a baseline [%]; 0 for the baseline itself.
    pub improvement_pct: f64,
    pub j_rms: f64,
    pub brake_norm: f64,
    pub arrival_time: f64,
}

impl CostBreakdown {
    /// Energy cost from the power surrogate and `Σ Δs (w1 a² + w2 j²)`.
    pub fn evaluate(traj: &Trajectory, coeffs: &StageCostCoeffs) -> Self {
        let n = traj.intervals();
        let mut energy = 0.0;
        let mut drive = 0.0;
        for k in 0..n {
            let p = &traj.points[k];
            let ds = traj.points[k + 1].s - p.s;
            energy += ds * energy_cost_rate(p.energy, p.force, coeffs);
            drive += ds * (coeffs.w1 * p.accel * p.accel + coeffs.w2 * p.jerk * p.jerk);
        }
        Self {
            energy_cost: energy,
            drivability_cost: drive,
            total_cost: energy + drive,
            improvement_pct: 0.0,
            j_rms: rms_jerk(traj),
            brake_norm: brake_norm(traj, coeffs.kind),
            arrival_time: traj.arrival_time(),
        }
    }

    pub fn against(mut self, baseline: &CostBreakdown) -> Self {
        self.improvement_pct = 100.0 * (baseline.total_cost - self.total_cost) / baseline.total_cost;
        self
    }
}
