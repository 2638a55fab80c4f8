//! A-posteriori audit of a trajectory against the nonlinear constraints.

use crate::error::{Error, Result};
use crate::model::{RoadProfile, TractionLimits, Trajectory, VehicleParams};
use crate::powertrain::PowertrainKind;

/// Worst scaled violation of one constraint family.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Violation {
    /// Largest violation divided by the family scale; 0 when satisfied.
    pub max: f64,
    pub worst: Option<usize>,
    /// Nodes whose scaled violation exceeds the audit tolerance.
    pub flagged: Vec<usize>,
}

impl Violation {
    fn record(&mut self, node: usize, scaled: f64, tol: f64) {
        let scaled = scaled.max(0.0);
        if scaled > self.max {
            self.max = scaled;
            self.worst = Some(node);
        }
        if scaled > tol {
            self.flagged.push(node);
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeasibilityReport {
    pub tol: f64,
    /// Speed band, scaled by the route's top speed.
    pub speed: Violation,
    /// Traction force above the envelope, scaled by the force scale.
    pub force_max: Violation,
    /// Traction force below the envelope (below zero for CV).
    pub force_min: Violation,
    pub accel: Violation,
    pub jerk: Violation,
    pub brake: Violation,
    /// `F + F_brk − (m a + k_E E + F_α)`, scaled by the force scale.
    pub force_balance: Violation,
    /// Mismatch against re-integrating the model from the previous node.
    pub dynamics: Violation,
}

impl FeasibilityReport {
    pub fn families(&self) -> [(&'static str, &Violation); 8] {
        [
            ("speed", &self.speed),
            ("force_max", &self.force_max),
            ("force_min", &self.force_min),
            ("accel", &self.accel),
            ("jerk", &self.jerk),
            ("brake", &self.brake),
            ("force_balance", &self.force_balance),
            ("dynamics", &self.dynamics),
        ]
    }

    pub fn max_scaled(&self) -> f64 {
        self.families().iter().map(|(_, v)| v.max).fold(0.0, f64::max)
    }

    pub fn is_feasible(&self) -> bool {
        self.max_scaled() <= self.tol
    }
}

/// Checks `trajectory` against the speed band, `limits`, the comfort and
/// brake boxes, the force balance and the dynamics.
///
/// The dynamics are re-integrated one interval at a time. A node that
/// disagrees with its prediction is flagged and the prediction, not the
/// recorded value, seeds the next interval, so a single corrupted node is
/// reported once.
pub fn nlp_feasibility_check(
    trajectory: &Trajectory,
    profile: &RoadProfile,
    params: &VehicleParams,
    kind: PowertrainKind,
    limits: &dyn TractionLimits,
    tol: f64,
) -> Result<FeasibilityReport> {
    let pts = &trajectory.points;
    if pts.len() < 2 {
        return Err(Error::Dimension("trajectory needs at least two nodes".into()));
    }
    let n = pts.len() - 1;
    let ds = trajectory.ds;
    let m = params.mass;
    let k_e = params.drag_per_energy();
    let mut bands = Vec::with_capacity(n);
    let mut grade = Vec::with_capacity(n);
    for k in 0..n {
        bands.push(profile.band_over(pts[k].s, pts[k + 1].s)?);
        grade.push(profile.mean_grade_force(pts[k].s, pts[k + 1].s, params)?);
    }
    let v_scale = bands.iter().map(|b| b.1).fold(0.0, f64::max).max(1.0);
    let f_scale = (-params.brake_force_min).max(limits.force_max(pts[0].energy).abs()).max(1.0);
    let a_scale = params.accel_max.max(-params.accel_min);
    let j_scale = params.jerk_max.max(-params.jerk_min);
    let mut r = FeasibilityReport { tol, ..Default::default() };

    for (k, p) in pts.iter().enumerate() {
        let mut lo = 0.0_f64;
        let mut hi = f64::INFINITY;
        for i in [k.wrapping_sub(1), k] {
            if i < n {
                lo = lo.max(bands[i].0);
                hi = hi.min(bands[i].1);
            }
        }
        r.speed.record(k, (lo - p.v).max(p.v - hi) / v_scale, tol);
        r.accel.record(k, (params.accel_min - p.accel).max(p.accel - params.accel_max) / a_scale, tol);
    }
    for k in 0..n {
        let p = &pts[k];
        let fmax = limits.force_max(p.energy);
        let fmin = match kind {
            PowertrainKind::Cv => 0.0,
            PowertrainKind::Ev => limits.force_min(p.energy),
        };
        r.force_max.record(k, (p.force - fmax) / f_scale, tol);
        r.force_min.record(k, (fmin - p.force) / f_scale, tol);
        r.jerk.record(k, (params.jerk_min - p.jerk).max(p.jerk - params.jerk_max) / j_scale, tol);
        r.brake.record(k, (params.brake_force_min - p.brake).max(p.brake) / f_scale, tol);
        let defect = p.force + p.brake - (m * p.accel + k_e * p.energy + grade[k]);
        r.force_balance.record(k, defect.abs() / f_scale, tol);
    }

    let (mut e, mut a, mut t) = (pts[0].energy, pts[0].accel, pts[0].t);
    let speed_defect = |k: usize| {
        let v = (2.0 * pts[k].energy / m).sqrt();
        (pts[k].v - v).abs() / v.max(1.0)
    };
    r.dynamics.record(0, speed_defect(0), tol);
    for k in 0..n {
        let v = (2.0 * e / m).sqrt();
        let (e1, a1, t1) = (e + ds * m * a, a + ds * pts[k].jerk, t + ds / v);
        let q = &pts[k + 1];
        let d = ((q.energy - e1).abs() / e1.abs().max(1.0))
            .max((q.accel - a1).abs() / a_scale)
            .max((q.t - t1).abs() / (ds / v))
            .max(speed_defect(k + 1));
        r.dynamics.record(k + 1, d, tol);
        if d > tol {
            (e, a, t) = (e1, a1, t1);
        } else {
            (e, a, t) = (q.energy, q.accel, q.t);
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RoadSample, TrajectoryPoint};

    struct Flat(f64);
    impl TractionLimits for Flat {
        fn force_max(&self, _: f64) -> f64 {
            self.0
        }
        fn force_min(&self, _: f64) -> f64 {
            -self.0
        }
    }

    fn cruise() -> (Trajectory, RoadProfile, VehicleParams) {
        let params = VehicleParams::heavy_truck();
        let profile =
            RoadProfile::new(vec![RoadSample::new(0.0, 0.01, 10.0, 30.0), RoadSample::new(3000.0, 0.01, 10.0, 30.0)])
                .unwrap();
        let ds = 300.0;
        let v = 20.0;
        let e = 0.5 * params.mass * v * v;
        let fa = crate::model::grade_force(0.01, &params);
        let f = params.drag_per_energy() * e + fa;
        let points = (0..=10)
            .map(|k| TrajectoryPoint {
                s: k as f64 * ds,
                t: k as f64 * ds / v,
                energy: e,
                v,
                accel: 0.0,
                jerk: 0.0,
                force: f,
                brake: 0.0,
                gear: 12,
            })
            .collect();
        (Trajectory { ds, points }, profile, params)
    }

    #[test]
    fn steady_cruise_is_feasible() {
        let (tr, profile, params) = cruise();
        let r = nlp_feasibility_check(&tr, &profile, &params, PowertrainKind::Cv, &Flat(1e5), 1e-9).unwrap();
        assert!(r.is_feasible(), "{r:?}");
    }

    #[test]
    fn corrupted_node_flagged_alone() {
        let (mut tr, profile, params) = cruise();
        tr.points[4].energy *= 0.5;
        let r = nlp_feasibility_check(&tr, &profile, &params, PowertrainKind::Cv, &Flat(1e5), 1e-6).unwrap();
        assert_eq!(r.dynamics.flagged, vec![4]);
        assert_eq!(r.dynamics.worst, Some(4));
    }

    #[test]
    fn traction_above_envelope_flagged() {
        let (tr, profile, params) = cruise();
        let r = nlp_feasibility_check(&tr, &profile, &params, PowertrainKind::Cv, &Flat(1000.0), 1e-6).unwrap();
        assert_eq!(r.force_max.flagged.len(), 10);
    }
}
