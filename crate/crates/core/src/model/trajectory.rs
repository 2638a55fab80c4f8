//! Distance-indexed state and control records.

use serde::{Deserialize, Serialize};
use std::io::Write;

use super::params::VehicleParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub t: f64,
    pub energy: f64,
    pub accel: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub jerk: f64,
    pub brake: f64,
}

impl Control {
    /// Clips the control into the admissible box.
    pub fn saturate(self, params: &VehicleParams) -> Self {
        Self {
            jerk: self.jerk.clamp(params.jerk_min, params.jerk_max),
            brake: self.brake.clamp(params.brake_force_min, 0.0),
        }
    }
}

/// One trajectory node. Controls and forces on a node act over the interval
/// that starts there; the final node repeats the last interval's values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub s: f64,
    pub t: f64,
    pub energy: f64,
    pub v: f64,
    pub accel: f64,
    pub jerk: f64,
    pub force: f64,
    pub brake: f64,
    pub gear: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub ds: f64,
    pub points: Vec<TrajectoryPoint>,
}

pub const CSV_HEADER: [&str; 9] = ["s_m", "t_s", "v_kmh", "E_J", "a_mps2", "j", "F_N", "F_brk_N", "gear"];

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of intervals.
    pub fn intervals(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    pub fn arrival_time(&self) -> f64 {
        self.points.last().map(|p| p.t).unwrap_or(0.0)
    }

    pub fn validate(&self, params: &VehicleParams) -> Result<()> {
        for w in self.points.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::InvalidParams(format!("time is not increasing at s = {} m", w[1].s)));
            }
        }
        for p in &self.points {
            let v = (2.0 * p.energy / params.mass).sqrt();
            if (v - p.v).abs() > 1e-9 * v.max(1.0) {
                return Err(Error::InvalidParams(format!("speed inconsistent with kinetic energy at s = {} m", p.s)));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for p in &self.points {
            w.write_record(&[
                p.s.to_string(),
                p.t.to_string(),
                (p.v * 3.6).to_string(),
                p.energy.to_string(),
                p.accel.to_string(),
                p.jerk.to_string(),
                p.force.to_string(),
                p.brake.to_string(),
                p.gear.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(s: f64, t: f64, energy: f64) -> TrajectoryPoint {
        let p = VehicleParams::heavy_truck();
        TrajectoryPoint {
            s,
            t,
            energy,
            v: (2.0 * energy / p.mass).sqrt(),
            accel: 0.0,
            jerk: 0.0,
            force: 0.0,
            brake: 0.0,
            gear: 12,
        }
    }

    #[test]
    fn csv_header_fixed() {
        let tr = Trajectory { ds: 100.0, points: vec![point(0.0, 0.0, 5e6), point(100.0, 6.3, 5e6)] };
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("s_m,t_s,v_kmh,E_J,a_mps2,j,F_N,F_brk_N,gear\n"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn detects_non_increasing_time() {
        let p = VehicleParams::heavy_truck();
        let tr = Trajectory { ds: 100.0, points: vec![point(0.0, 1.0, 5e6), point(100.0, 1.0, 5e6)] };
        assert!(tr.validate(&p).is_err());
    }

    #[test]
    fn saturate_control() {
        let p = VehicleParams::heavy_truck();
        let c = Control { jerk: 1.0, brake: 5.0 }.saturate(&p);
        assert_eq!(c.jerk, p.jerk_max);
        assert_eq!(c.brake, 0.0);
    }
}
