//! Distance-gridded road description.
//!
//! Grade and speed limits are piecewise constant: sample `i` describes the
//! interval `[s_i, s_{i+1})`. The final sample only marks the route end.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::VehicleParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadSample {
    /// Position along the route [m].
    pub position: f64,
    /// Road grade [rad].
    pub grade: f64,
    pub v_min_road: f64,
    pub v_max_road: f64,
    pub v_min_traffic: f64,
    pub v_max_traffic: f64,
}

impl RoadSample {
    pub fn new(position: f64, grade: f64, v_min: f64, v_max: f64) -> Self {
        Self { position, grade, v_min_road: v_min, v_max_road: v_max, v_min_traffic: 0.0, v_max_traffic: f64::INFINITY }
    }

    pub fn v_min(&self) -> f64 {
        self.v_min_road.max(self.v_min_traffic)
    }

    pub fn v_max(&self) -> f64 {
        self.v_max_road.min(self.v_max_traffic)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadProfile {
    samples: Vec<RoadSample>,
}

impl RoadProfile {
    pub fn new(samples: Vec<RoadSample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidParams("a road needs at least two samples".into()));
        }
        if samples[0].position != 0.0 {
            return Err(Error::InvalidParams("road must start at position 0".into()));
        }
        for (i, w) in samples.windows(2).enumerate() {
            if !(w[1].position > w[0].position) {
                return Err(Error::InvalidParams(format!("positions must be strictly increasing (sample {})", i + 1)));
            }
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.grade.is_finite() || !s.position.is_finite() {
                return Err(Error::InvalidParams(format!("non-finite value in sample {i}")));
            }
            if !(s.v_min() > 0.0) {
                return Err(Error::InvalidParams(format!("minimum speed must be positive (sample {i})")));
            }
            if !(s.v_min() < s.v_max()) {
                return Err(Error::InvalidParams(format!(
                    "empty speed band at sample {i}: [{}, {}]",
                    s.v_min(),
                    s.v_max()
                )));
            }
        }
        Ok(Self { samples })
    }

    /// Builds a profile from elevations, converting each pair of consecutive
    /// samples to a grade `atan(Δh/Δs)`.
    pub fn from_elevation(positions: &[f64], elevations: &[f64], v_min: &[f64], v_max: &[f64]) -> Result<Self> {
        let n = positions.len();
        if elevations.len() != n || v_min.len() != n || v_max.len() != n {
            return Err(Error::Dimension("elevation profile columns differ in length".into()));
        }
        if n < 2 {
            return Err(Error::InvalidParams("a road needs at least two samples".into()));
        }
        let mut samples = Vec::with_capacity(n);
        for i in 0..n {
            let j = if i + 1 < n { i } else { i - 1 };
            let ds = positions[j + 1] - positions[j];
            let grade = if ds > 0.0 { ((elevations[j + 1] - elevations[j]) / ds).atan() } else { 0.0 };
            samples.push(RoadSample::new(positions[i], grade, v_min[i], v_max[i]));
        }
        Self::new(samples)
    }

    /// Seeded rolling-hills route: a few random sinusoids plus isolated ramps,
    /// rescaled so the steepest grade equals `max_grade`.
    pub fn synthetic(route: &SyntheticRoute) -> Result<Self> {
        if !(route.length > route.resolution && route.resolution > 0.0) {
            return Err(Error::InvalidParams("synthetic route length/resolution".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(route.seed);
        let n = (route.length / route.resolution).round() as usize;
        let positions: Vec<f64> = (0..=n).map(|i| route.length * i as f64 / n as f64).collect();

        let waves: Vec<(f64, f64, f64)> = (0..5)
            .map(|_| {
                let wavelength = rng.gen_range(4_000.0..18_000.0);
                let amplitude = rng.gen_range(10.0..35.0);
                let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                (wavelength, amplitude, phase)
            })
            .collect();
        let hills: Vec<(f64, f64, f64)> = (0..(route.length / 15_000.0).ceil() as usize)
            .map(|_| {
                let center = rng.gen_range(0.0..route.length);
                let width = rng.gen_range(1_500.0..4_000.0);
                let height = rng.gen_range(-40.0..60.0);
                (center, width, height)
            })
            .collect();

        let mut elevation: Vec<f64> = positions
            .iter()
            .map(|&s| {
                let wave: f64 = waves.iter().map(|(l, a, p)| a * (std::f64::consts::TAU * s / l + p).sin()).sum();
                let hill: f64 = hills
                    .iter()
                    .map(|&(c, w, h)| {
                        // trapezoidal bump: linear ramps of width w on both sides
                        let d = (s - c).abs();
                        if d < w {
                            h
                        } else if d < 2.0 * w {
                            h * (2.0 - d / w)
                        } else {
                            0.0
                        }
                    })
                    .sum();
                wave + hill
            })
            .collect();

        let steepest = elevation
            .windows(2)
            .zip(positions.windows(2))
            .map(|(h, s)| ((h[1] - h[0]) / (s[1] - s[0])).abs())
            .fold(0.0, f64::max);
        if steepest > 0.0 {
            let k = route.max_grade.tan() / steepest;
            elevation.iter_mut().for_each(|h| *h *= k);
        }
        let vmin = vec![route.v_min; positions.len()];
        let vmax = vec![route.v_max; positions.len()];
        Self::from_elevation(&positions, &elevation, &vmin, &vmax)
    }

    pub fn samples(&self) -> &[RoadSample] {
        &self.samples
    }

    pub fn length(&self) -> f64 {
        self.samples.last().map(|s| s.position).unwrap_or(0.0)
    }

    /// Index of the interval containing `s`; the route end maps to the last interval.
    pub fn interval_index(&self, s: f64) -> Result<usize> {
        let length = self.length();
        if !(0.0..=length).contains(&s) {
            return Err(Error::OutOfRange { position: s, length });
        }
        let idx = self.samples.partition_point(|x| x.position <= s);
        Ok(idx.saturating_sub(1).min(self.samples.len() - 2))
    }

    pub fn grade_at(&self, s: f64) -> Result<f64> {
        Ok(self.samples[self.interval_index(s)?].grade)
    }

    /// Effective speed band at `s`.
    pub fn speed_band_at(&self, s: f64) -> Result<(f64, f64)> {
        let x = &self.samples[self.interval_index(s)?];
        Ok((x.v_min(), x.v_max()))
    }

    /// Mean grade resistance over `[s0, s1]`, integrating the piecewise-constant profile exactly.
    pub fn mean_grade_force(&self, s0: f64, s1: f64, params: &VehicleParams) -> Result<f64> {
        let length = self.length();
        for s in [s0, s1] {
            if !(-1e-9..=length + 1e-9).contains(&s) {
                return Err(Error::OutOfRange { position: s, length });
            }
        }
        if s1 <= s0 {
            return Ok(grade_force(self.grade_at(s0.clamp(0.0, length))?, params));
        }
        let mut acc = 0.0;
        for w in self.samples.windows(2) {
            let lo = w[0].position.max(s0);
            let hi = w[1].position.min(s1);
            if hi > lo {
                acc += (hi - lo) * grade_force(w[0].grade, params);
            }
        }
        Ok(acc / (s1 - s0))
    }

    /// Tightest speed band over `[s0, s1]`: the largest minimum and the smallest maximum.
    pub fn band_over(&self, s0: f64, s1: f64) -> Result<(f64, f64)> {
        // round-off past either end, as in `mean_grade_force`
        let snap = |s: f64| if (-1e-9..=self.length() + 1e-9).contains(&s) { s.clamp(0.0, self.length()) } else { s };
        let (s0, s1) = (snap(s0), snap(s1));
        let i0 = self.interval_index(s0)?;
        let mut i1 = self.interval_index(s1)?;
        // an interval that merely touches s1 from the right does not count
        if i1 > i0 && self.samples[i1].position >= s1 {
            i1 -= 1;
        }
        let mut band = (0.0_f64, f64::INFINITY);
        for x in &self.samples[i0..=i1] {
            band.0 = band.0.max(x.v_min());
            band.1 = band.1.min(x.v_max());
        }
        Ok(band)
    }
}

/// Grade resistance F_α = m g (sin α + c_r cos α).
pub fn grade_force(grade: f64, params: &VehicleParams) -> f64 {
    params.mass * params.gravity * (grade.sin() + params.rolling_coeff * grade.cos())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRoute {
    pub length: f64,
    pub seed: u64,
    pub max_grade: f64,
    pub resolution: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for SyntheticRoute {
    fn default() -> Self {
        Self { length: 118_000.0, seed: 7, max_grade: 0.035, resolution: 100.0, v_min: 60.0 / 3.6, v_max: 90.0 / 3.6 }
    }
}
