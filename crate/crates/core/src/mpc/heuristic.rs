//! Heuristic cruise profile: hold `v_cru` unless the actuator or the speed
//! band says otherwise. It seeds the linearisation and fixes the time budget.

use crate::error::{Error, Result};
use crate::model::{accel_limits, RoadProfile, TractionLimits, Trajectory, VehicleParams};
use crate::ocp::{split_force, HorizonGrid, HorizonPlan, StageCostCoeffs};
use crate::powertrain::Powertrain;

use super::sqp::plan_trajectory;

/// Speed samples on a uniform grid over the whole route.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedProfile {
    pub s: Vec<f64>,
    pub v: Vec<f64>,
    pub energy: Vec<f64>,
}

impl SpeedProfile {
    pub fn ds(&self) -> f64 {
        self.s[1] - self.s[0]
    }

    /// Linear interpolation of the speed, held constant past the ends.
    pub fn speed_at(&self, s: f64) -> f64 {
        interp(&self.s, &self.v, s)
    }

    pub fn energy_at(&self, s: f64) -> f64 {
        interp(&self.s, &self.energy, s)
    }

    /// `∫ ds / v` over `[s0, s1]` by the trapezoid rule on the sample grid.
    pub fn travel_time(&self, s0: f64, s1: f64) -> f64 {
        if s1 <= s0 {
            return 0.0;
        }
        let mut knots = vec![s0];
        knots.extend(self.s.iter().copied().filter(|s| *s > s0 && *s < s1));
        knots.push(s1);
        knots.windows(2).map(|w| 0.5 * (w[1] - w[0]) * (1.0 / self.speed_at(w[0]) + 1.0 / self.speed_at(w[1]))).sum()
    }
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let i = xs.partition_point(|v| *v <= x) - 1;
    let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + w * (ys[i + 1] - ys[i])
}

/// Forward integration of the cruise heuristic at interval `ds`:
/// `E_{k+1} = min(E_cru, E_k + Δs m a_max(E_k))`, never below
/// `E_k + Δs m a_min(E_k)`, then clipped into the speed band.
pub fn heuristic_velocity(
    profile: &RoadProfile,
    params: &VehicleParams,
    limits: &dyn TractionLimits,
    v_cruise: f64,
    ds: f64,
) -> Result<SpeedProfile> {
    if !(v_cruise > 0.0) {
        return Err(Error::InvalidParams(format!("cruise speed must be positive, got {v_cruise}")));
    }
    let grid = HorizonGrid::on_route(profile, params, 0.0, profile.length(), ds)?;
    if grid.n == 0 {
        return Err(Error::Dimension("route is shorter than one interval".into()));
    }
    let m = params.mass;
    let e_of = |v: f64| 0.5 * m * v * v;
    let e_cru = e_of(v_cruise);
    let clip = |e: f64, k: usize| -> Result<f64> {
        let (lo, hi) = grid.node_band(k);
        if lo > hi {
            return Err(Error::Infeasible(format!("empty speed band at s = {} m", grid.position(k))));
        }
        Ok(e.clamp(e_of(lo), e_of(hi)))
    };
    let mut energy = vec![clip(e_cru, 0)?];
    for k in 0..grid.n {
        let e = energy[k];
        let band = accel_limits(e, grid.grade_force[k], limits, params);
        let reach = e + grid.ds * m * band.max;
        let floor = e + grid.ds * m * band.min;
        let next = e_cru.min(reach).max(floor);
        energy.push(clip(next, k + 1)?);
    }
    Ok(SpeedProfile {
        s: (0..=grid.n).map(|k| grid.position(k)).collect(),
        v: energy.iter().map(|e| (2.0 * e / m).sqrt()).collect(),
        energy,
    })
}

/// The heuristic profile driven as a trajectory: accelerations from energy
/// differences, jerk from acceleration differences and the cheapest force
/// split on every interval.
pub fn heuristic_trajectory(
    speed: &SpeedProfile,
    profile: &RoadProfile,
    params: &VehicleParams,
    powertrain: &Powertrain,
    coeffs: &StageCostCoeffs,
) -> Result<Trajectory> {
    let n = speed.s.len() - 1;
    let ds = speed.ds();
    let m = params.mass;
    let k_e = params.drag_per_energy();
    let limits = powertrain.fitted_limits(params);
    let e = &speed.energy;
    let mut accel: Vec<f64> = (0..n).map(|k| (e[k + 1] - e[k]) / (ds * m)).collect();
    accel.push(accel[n - 1]);
    let jerk: Vec<f64> = (0..n).map(|k| (accel[k + 1] - accel[k]) / ds).collect();
    let mut force = Vec::with_capacity(n);
    let mut brake = Vec::with_capacity(n);
    for k in 0..n {
        let fa = profile.mean_grade_force(speed.s[k], speed.s[k + 1], params)?;
        let total = m * accel[k] + k_e * e[k] + fa;
        let (f, fb) = split_force(total, e[k], &limits, coeffs, params).ok_or_else(|| {
            Error::Infeasible(format!("heuristic force {total:.0} N is outside the envelope at s = {} m", speed.s[k]))
        })?;
        force.push(f);
        brake.push(fb);
    }
    let plan = HorizonPlan { energy: e.clone(), accel, jerk, force, brake };
    Ok(plan_trajectory(&plan, speed.s[0], ds, 0.0, powertrain, m))
}
