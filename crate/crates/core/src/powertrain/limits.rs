//! Inner approximation of the traction force envelope by `c0 + c1 / v`.

use serde::{Deserialize, Serialize};

use super::actuator::interp;
use super::gear_map::GearMap;
use crate::error::{Error, Result};
use crate::model::TractionLimits;

/// Solves `max ∫_{v0}^{v1} (y0 + y1 / v) dv` subject to `y0 + y1 / v_i ≤ F_i`
/// and `y1 ≥ 0`, returning `(y0, y1)`.
///
/// For fixed `y1` the best `y0` is `min_i (F_i − y1 / v_i)`, so the objective
/// is concave piecewise linear in `y1`. The walk follows the lower envelope of
/// those lines from `y1 = 0` until the slope turns non-positive; the optimum
/// sits on a breakpoint and is exact.
pub fn max_inner_fit(speeds: &[f64], limits: &[f64], v0: f64, v1: f64) -> Result<(f64, f64)> {
    if speeds.len() != limits.len() || speeds.is_empty() {
        return Err(Error::Dimension("speeds and limits must be non-empty and equal length".into()));
    }
    if !(0.0 < v0 && v0 < v1) {
        return Err(Error::InvalidParams(format!("need 0 < v0 < v1, got {v0}, {v1}")));
    }
    if speeds.iter().chain(limits).any(|x| !x.is_finite()) || speeds.iter().any(|v| *v <= 0.0) {
        return Err(Error::InvalidParams("limit samples must be finite with positive speeds".into()));
    }
    let len = v1 - v0;
    let log = (v1 / v0).ln();
    let u: Vec<f64> = speeds.iter().map(|v| 1.0 / v).collect();

    // active line at y1: smallest F_i − u_i y1, ties to the steepest
    let active_at = |y1: f64| -> usize {
        let mut best = 0;
        for i in 1..u.len() {
            let (a, b) = (limits[i] - u[i] * y1, limits[best] - u[best] * y1);
            if a < b || (a == b && u[i] > u[best]) {
                best = i;
            }
        }
        best
    };
    let mut y1 = 0.0;
    let mut act = active_at(0.0);
    for _ in 0..=u.len() {
        if log - len * u[act] <= 0.0 {
            return Ok((limits[act] - u[act] * y1, y1));
        }
        let mut next: Option<(f64, usize)> = None;
        for j in 0..u.len() {
            if u[j] > u[act] {
                let y = ((limits[j] - limits[act]) / (u[j] - u[act])).max(y1);
                let better = match next {
                    None => true,
                    Some((yn, jn)) => y < yn || (y == yn && u[j] > u[jn]),
                };
                if better {
                    next = Some((y, j));
                }
            }
        }
        match next {
            Some((y, j)) => {
                y1 = y;
                act = j;
            }
            None => return Err(Error::Solver("force-limit LP is unbounded".into())),
        }
    }
    Err(Error::Solver("force-limit LP walk did not terminate".into()))
}

/// Fitted envelope `max{F_lo, x0 + x1/v} ≤ F ≤ min{F_hi, y0 + y1/v}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceLimitFit {
    pub y0: f64,
    pub y1: f64,
    pub x0: f64,
    pub x1: f64,
    /// Constant caps F̄ and F̲ [N].
    pub f_max: f64,
    pub f_min: f64,
    /// Validity band [m/s].
    pub v0: f64,
    pub v1: f64,
}

impl ForceLimitFit {
    /// Fits both limits of a gear map on `[v0, v1]`. The LP rows sit on the
    /// map's energy nodes plus the interpolated band ends, so the fit stays
    /// below the linearly interpolated table everywhere in the band.
    pub fn from_gear_map(map: &GearMap, v0: f64, v1: Option<f64>) -> Result<Self> {
        let top = map.speed_of(*map.energy.last().unwrap());
        let v1 = v1.unwrap_or(top).min(top);
        if !(v0 < v1) {
            return Err(Error::InvalidParams(format!("fit band [{v0}, {v1}] is empty")));
        }
        let e_of = |v: f64| 0.5 * map.mass * v * v;
        let mut speeds = vec![v0];
        let mut fmax = vec![interp(&map.energy, &map.force_max, e_of(v0))];
        let mut fmin = vec![interp(&map.energy, &map.force_min, e_of(v0))];
        for (i, &e) in map.energy.iter().enumerate() {
            let v = map.speed_of(e);
            if v > v0 && v < v1 {
                speeds.push(v);
                fmax.push(map.force_max[i]);
                fmin.push(map.force_min[i]);
            }
        }
        speeds.push(v1);
        fmax.push(interp(&map.energy, &map.force_max, e_of(v1)));
        fmin.push(interp(&map.energy, &map.force_min, e_of(v1)));
        Self::fit(&speeds, &fmax, &fmin, v0, v1)
    }

    /// Fits sampled limits directly; the minimum limit is mirrored through the
    /// maximum-limit LP.
    pub fn fit(speeds: &[f64], fmax: &[f64], fmin: &[f64], v0: f64, v1: f64) -> Result<Self> {
        let (y0, y1) = max_inner_fit(speeds, fmax, v0, v1)?;
        let neg: Vec<f64> = fmin.iter().map(|f| -f).collect();
        let (a0, a1) = max_inner_fit(speeds, &neg, v0, v1)?;
        let in_band = |i: &usize| speeds[*i] >= v0 && speeds[*i] <= v1;
        let f_max = (0..speeds.len()).filter(in_band).map(|i| fmax[i]).fold(f64::MIN, f64::max);
        let f_min = (0..speeds.len()).filter(in_band).map(|i| fmin[i]).fold(f64::MAX, f64::min);
        Ok(Self { y0, y1, x0: -a0, x1: -a1, f_max, f_min, v0, v1 })
    }

    pub fn force_max_at_speed(&self, v: f64) -> f64 {
        self.f_max.min(self.y0 + self.y1 / v)
    }

    pub fn force_min_at_speed(&self, v: f64) -> f64 {
        self.f_min.max(self.x0 + self.x1 / v)
    }
}

/// Fitted limits as functions of kinetic energy for a vehicle of mass `mass`.
#[derive(Debug, Clone, Copy)]
pub struct FittedLimits {
    pub fit: ForceLimitFit,
    pub mass: f64,
}

impl TractionLimits for FittedLimits {
    fn force_max(&self, energy: f64) -> f64 {
        self.fit.force_max_at_speed((2.0 * energy / self.mass).sqrt())
    }

    fn force_min(&self, energy: f64) -> f64 {
        self.fit.force_min_at_speed((2.0 * energy / self.mass).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Best feasible vertex over all constraint pairs and the y1 = 0 axis.
    fn brute_force(speeds: &[f64], limits: &[f64], v0: f64, v1: f64) -> (f64, f64, f64) {
        let obj = |y0: f64, y1: f64| (v1 - v0) * y0 + (v1 / v0).ln() * y1;
        let feasible = |y0: f64, y1: f64| {
            y1 >= -1e-12 && speeds.iter().zip(limits).all(|(v, f)| y0 + y1 / v <= f + 1e-9 * f.abs().max(1.0))
        };
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        let y0 = limits.iter().cloned().fold(f64::INFINITY, f64::min);
        if feasible(y0, 0.0) {
            best = (obj(y0, 0.0), y0, 0.0);
        }
        for i in 0..speeds.len() {
            for j in i + 1..speeds.len() {
                let (ui, uj) = (1.0 / speeds[i], 1.0 / speeds[j]);
                if (ui - uj).abs() < 1e-15 {
                    continue;
                }
                let y1 = (limits[i] - limits[j]) / (ui - uj);
                let y0 = limits[i] - ui * y1;
                if feasible(y0, y1) && obj(y0, y1) > best.0 {
                    best = (obj(y0, y1), y0, y1);
                }
            }
        }
        best
    }

    #[test]
    fn recovers_model_class_member() {
        let speeds: Vec<f64> = (0..50).map(|i| 3.0 + 0.5 * i as f64).collect();
        let limits: Vec<f64> = speeds.iter().map(|v| 1500.0 + 300e3 / v).collect();
        let (y0, y1) = max_inner_fit(&speeds, &limits, 3.0, speeds[49]).unwrap();
        assert!((y0 - 1500.0).abs() < 1e-6 && (y1 - 300e3).abs() < 1e-4, "{y0} {y1}");
    }

    #[test]
    fn flat_limit() {
        let speeds: Vec<f64> = (1..30).map(|i| i as f64).collect();
        let limits = vec![25_000.0; speeds.len()];
        let (y0, y1) = max_inner_fit(&speeds, &limits, 1.0, 29.0).unwrap();
        assert_eq!((y0, y1), (25_000.0, 0.0));
    }

    #[test]
    fn matches_pair_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let n = rng.gen_range(5..40);
            let mut speeds: Vec<f64> = (0..n).map(|_| rng.gen_range(2.0..40.0)).collect();
            speeds.sort_by(f64::total_cmp);
            let limits: Vec<f64> = speeds.iter().map(|v| rng.gen_range(0.0..5000.0) + 2e5 / v).collect();
            let (v0, v1) = (speeds[0], speeds[n - 1]);
            let (y0, y1) = max_inner_fit(&speeds, &limits, v0, v1).unwrap();
            let (best, _, _) = brute_force(&speeds, &limits, v0, v1);
            let obj = (v1 - v0) * y0 + (v1 / v0).ln() * y1;
            assert!((obj - best).abs() <= 1e-9 * best.abs().max(1.0), "{obj} vs {best}");
            for (v, f) in speeds.iter().zip(&limits) {
                assert!(y0 + y1 / v <= f + 1e-9);
            }
        }
    }

    #[test]
    fn min_limit_mirrors() {
        let speeds: Vec<f64> = (0..40).map(|i| 15.0 + 0.5 * i as f64).collect();
        let fmax: Vec<f64> = speeds.iter().map(|v| 350e3 / v).collect();
        let fmin: Vec<f64> = fmax.iter().map(|f| -f).collect();
        let fit = ForceLimitFit::fit(&speeds, &fmax, &fmin, 15.0, speeds[39]).unwrap();
        assert!(fit.x1 <= 0.0 && fit.y1 >= 0.0);
        assert!((fit.x0 + fit.y0).abs() < 1e-6 && (fit.x1 + fit.y1).abs() < 1e-4);
        for (v, f) in speeds.iter().zip(&fmin) {
            assert!(fit.force_min_at_speed(*v) >= f - 1e-9);
        }
    }
}
