//! Polynomial internal-power surrogates fitted with nonnegative least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::actuator::PowertrainKind;
use super::gear_map::GearMap;
use crate::error::{Error, Result};

/// Lawson–Hanson active-set solve of `min ‖A x − b‖₂` subject to `x ≥ 0`.
///
/// Columns are normalised internally. A zero column or a rank-deficient
/// design is reported as a fit error.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let (rows, cols) = a.shape();
    if rows != b.len() {
        return Err(Error::Dimension(format!("{rows} rows but {} targets", b.len())));
    }
    if rows < cols {
        return Err(Error::Fit(format!("{rows} samples cannot identify {cols} coefficients")));
    }
    let norms: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    if let Some(j) = norms.iter().position(|n| !(*n > 0.0)) {
        return Err(Error::Fit(format!("basis column {j} is identically zero")));
    }
    let mut scaled = a.clone();
    for (j, n) in norms.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / n);
    }
    let sv = scaled.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-10 * smax) {
        return Err(Error::Fit("basis is rank deficient on the sample set".into()));
    }

    let tol = 1e-12 * smax * b.norm().max(1.0);
    let mut x = DVector::zeros(cols);
    let mut passive = vec![false; cols];
    for _outer in 0..(3 * cols + 10) {
        let w = scaled.transpose() * (b - &scaled * &x);
        let next = (0..cols).filter(|&j| !passive[j] && w[j] > tol).max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = next else { break };
        passive[j] = true;
        loop {
            let s = solve_passive(&scaled, b, &passive)?;
            if (0..cols).filter(|&k| passive[k]).all(|k| s[k] > 0.0) {
                x = s;
                break;
            }
            let mut alpha = f64::INFINITY;
            for k in (0..cols).filter(|&k| passive[k] && s[k] <= 0.0) {
                alpha = alpha.min(x[k] / (x[k] - s[k]));
            }
            x += (s - &x) * alpha;
            for k in 0..cols {
                if passive[k] && x[k] <= tol {
                    passive[k] = false;
                    x[k] = 0.0;
                }
            }
        }
    }
    Ok(DVector::from_iterator(cols, (0..cols).map(|j| x[j] / norms[j])))
}

fn solve_passive(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> Result<DVector<f64>> {
    let idx: Vec<usize> = (0..passive.len()).filter(|&j| passive[j]).collect();
    let sub = a.select_columns(&idx);
    let sol =
        sub.svd(true, true).solve(b, 1e-14).map_err(|e| Error::Fit(format!("least-squares subproblem failed: {e}")))?;
    let mut out = DVector::zeros(passive.len());
    for (k, &j) in idx.iter().enumerate() {
        out[j] = sol[k];
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FitResidual {
    pub max_rel: f64,
    pub mean_rel: f64,
    pub samples: usize,
}

/// `P(v, F) = p0 + p1 v³ + p2 v F + p3 v F²`, with `p3 = 0` for CV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub kind: PowertrainKind,
    pub coeffs: [f64; 4],
    /// Speed band of the fit samples [m/s].
    pub speed_range: (f64, f64),
    pub residual: FitResidual,
}

impl PowerFit {
    /// Fits the gear-optimal power of `map` over the given speed band. CV uses
    /// traction cells only; EV uses every feasible cell.
    pub fn from_gear_map(map: &GearMap, speed_range: (f64, f64)) -> Result<Self> {
        let (n_e, n_f) = map.shape();
        let mut samples = Vec::new();
        for i in 0..n_e {
            let v = map.speed_of(map.energy[i]);
            if v < speed_range.0 || v > speed_range.1 {
                continue;
            }
            for k in 0..n_f {
                let f = map.force[k];
                if map.gear[i * n_f + k] == 0 || (map.kind == PowertrainKind::Cv && f <= 0.0) {
                    continue;
                }
                // EV cells below the machine envelope carry service braking
                if f < map.force_min[i] {
                    continue;
                }
                if let Some(p) = map.power[i * n_f + k] {
                    samples.push((v, f, p));
                }
            }
        }
        Self::fit_samples(map.kind, &samples, speed_range)
    }

    /// Relative-error weighted NNLS over `(v, F, P)` samples.
    pub fn fit_samples(kind: PowertrainKind, samples: &[(f64, f64, f64)], speed_range: (f64, f64)) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Fit("no samples in the fit domain".into()));
        }
        let cols = match kind {
            PowertrainKind::Cv => 3,
            PowertrainKind::Ev => 4,
        };
        let floor = relative_floor(samples);
        let mut a = DMatrix::zeros(samples.len(), cols);
        let mut b = DVector::zeros(samples.len());
        for (r, &(v, f, p)) in samples.iter().enumerate() {
            let w = 1.0 / p.abs().max(floor);
            let basis = [1.0, v.powi(3), v * f, v * f * f];
            for c in 0..cols {
                a[(r, c)] = w * basis[c];
            }
            b[r] = w * p;
        }
        let x = nnls(&a, &b)?;
        let mut coeffs = [0.0; 4];
        coeffs[..cols].copy_from_slice(x.as_slice());
        let mut fit = Self {
            kind,
            coeffs,
            speed_range,
            residual: FitResidual { max_rel: 0.0, mean_rel: 0.0, samples: samples.len() },
        };
        fit.residual = fit.residual_on(samples);
        Ok(fit)
    }

    pub fn power(&self, v: f64, force: f64) -> f64 {
        let [p0, p1, p2, p3] = self.coeffs;
        p0 + p1 * v.powi(3) + p2 * v * force + p3 * v * force * force
    }

    /// Relative error against samples; EV denominators are floored at 5 % of
    /// the largest sample magnitude because the power crosses zero.
    pub fn residual_on(&self, samples: &[(f64, f64, f64)]) -> FitResidual {
        let floor = relative_floor(samples);
        let mut max_rel: f64 = 0.0;
        let mut sum = 0.0;
        for &(v, f, p) in samples {
            let e = (self.power(v, f) - p).abs() / p.abs().max(floor);
            max_rel = max_rel.max(e);
            sum += e;
        }
        FitResidual { max_rel, mean_rel: sum / samples.len().max(1) as f64, samples: samples.len() }
    }
}

fn relative_floor(samples: &[(f64, f64, f64)]) -> f64 {
    0.05 * samples.iter().map(|s| s.2.abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VehicleParams;
    use crate::powertrain::{ActuatorMap, GridSpec, WheelTables};

    #[test]
    fn nnls_clips_negative_coefficient() {
        // b = 2 x0 − 1 x1 on orthogonal columns: unconstrained x1 < 0
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        let b = DVector::from_vec(vec![2.0, -1.0, 2.0]);
        let x = nnls(&a, &b).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12);
        assert_eq!(x[1], 0.0);
    }

    #[test]
    fn recovers_model_class_member() {
        let truth = [2000.0, 0.8, 2.1];
        let mut samples = Vec::new();
        for i in 0..12 {
            for k in 1..10 {
                let v = 10.0 + i as f64;
                let f = 1000.0 * k as f64;
                samples.push((v, f, truth[0] + truth[1] * v.powi(3) + truth[2] * v * f));
            }
        }
        let fit = PowerFit::fit_samples(PowertrainKind::Cv, &samples, (10.0, 21.0)).unwrap();
        for c in 0..3 {
            assert!((fit.coeffs[c] - truth[c]).abs() <= 1e-6 * truth[c], "{:?}", fit.coeffs);
        }
        assert!(fit.residual.max_rel < 1e-9);
    }

    #[test]
    fn zero_force_is_unidentifiable() {
        let samples: Vec<_> = (0..20).map(|i| (10.0 + i as f64, 0.0, 5000.0)).collect();
        assert!(matches!(PowerFit::fit_samples(PowertrainKind::Cv, &samples, (10.0, 30.0)), Err(Error::Fit(_))));
    }

    #[test]
    fn synthetic_cv_fit_quality() {
        let params = VehicleParams::heavy_truck();
        let tables = WheelTables::build(&ActuatorMap::default_cv(), &params, &GridSpec::default()).unwrap();
        let map = GearMap::optimise(&tables);
        let fit = PowerFit::from_gear_map(&map, (50.0 / 3.6, 100.0 / 3.6)).unwrap();
        assert!(fit.coeffs.iter().all(|c| *c >= 0.0));
        assert!(fit.residual.max_rel <= 0.05, "{:?} {:?}", fit.coeffs, fit.residual);
    }

    #[test]
    fn synthetic_ev_recuperates() {
        let params = VehicleParams::electric_truck();
        let tables = WheelTables::build(&ActuatorMap::default_ev(), &params, &GridSpec::default()).unwrap();
        let map = GearMap::optimise(&tables);
        let fit = PowerFit::from_gear_map(&map, (50.0 / 3.6, 100.0 / 3.6)).unwrap();
        assert!(fit.coeffs.iter().all(|c| *c >= 0.0));
        assert!(fit.coeffs[3] > 0.0);
        assert!(fit.power(20.0, -5000.0) < 0.0);
    }
}
