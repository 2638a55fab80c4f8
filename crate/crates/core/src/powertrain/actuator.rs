//! Synthetic static actuator maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower heating value of diesel [J/kg].
pub const DIESEL_LHV: f64 = 42.6e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowertrainKind {
    /// Combustion engine with a stepped gearbox.
    Cv,
    /// Single-ratio electric drive.
    Ev,
}

impl std::fmt::Display for PowertrainKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PowertrainKind::Cv => "cv",
            PowertrainKind::Ev => "ev",
        })
    }
}

impl std::str::FromStr for PowertrainKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cv" => Ok(Self::Cv),
            "ev" => Ok(Self::Ev),
            other => Err(Error::Config(format!("unknown powertrain kind {other:?}"))),
        }
    }
}

/// Generator coefficients, kept with the map so tests can check the table
/// against the closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LossModel {
    /// `P = e1 (M ω + P_aux + M_f ω + k3 ω³)` for `M ≥ 0`, fuel cut below.
    Willans { e1: f64, p_aux: f64, m_friction: f64, k3: f64 },
    /// `P = M ω + k0 + k1 ω² + k2 M²`.
    Electric { k0: f64, k1: f64, k2: f64 },
}

impl LossModel {
    pub fn power(&self, omega: f64, torque: f64) -> f64 {
        match *self {
            LossModel::Willans { e1, p_aux, m_friction, k3 } => {
                if torque < 0.0 {
                    0.0
                } else {
                    e1 * (torque * omega + p_aux + m_friction * omega + k3 * omega.powi(3))
                }
            }
            LossModel::Electric { k0, k1, k2 } => torque * omega + k0 + k1 * omega * omega + k2 * torque * torque,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuatorMap {
    pub kind: PowertrainKind,
    pub omega_idle: f64,
    pub omega_max: f64,
    /// Shaft speed grid [rad/s].
    pub omega: Vec<f64>,
    /// Shaft torque grid [Nm].
    pub torque: Vec<f64>,
    /// Internal power, row-major over (ω, M) [W]. Chemical power for CV.
    pub power: Vec<f64>,
    pub torque_max: Vec<f64>,
    pub torque_min: Vec<f64>,
    /// Additional-brake torque per ω (CV only, all zero for EV) [Nm].
    pub brake_torque: Vec<f64>,
    /// Heating value [J/kg], CV only.
    pub lhv: Option<f64>,
    pub model: LossModel,
}

impl ActuatorMap {
    /// Synthesises a map for a powertrain of the given rated power.
    pub fn synthesize(kind: PowertrainKind, rated_power: f64, omega_idle: f64, omega_max: f64) -> Result<Self> {
        if !(rated_power > 0.0 && rated_power.is_finite()) {
            return Err(Error::Construction(format!("rated power must be positive, got {rated_power}")));
        }
        if !(omega_idle > 0.0 && omega_idle < omega_max && omega_max.is_finite()) {
            return Err(Error::Construction(format!("need 0 < omega_idle < omega_max, got {omega_idle}, {omega_max}")));
        }
        match kind {
            PowertrainKind::Cv => Ok(synth_cv(rated_power, omega_idle, omega_max)),
            PowertrainKind::Ev => Ok(synth_ev(rated_power, omega_idle, omega_max)),
        }
    }

    /// 350 kW diesel with idle at 600 rpm and cut-off at 2100 rpm.
    pub fn default_cv() -> Self {
        synth_cv(350e3, 62.8, 220.0)
    }

    /// 350 kW machine, 1000 rad/s top speed.
    pub fn default_ev() -> Self {
        synth_ev(350e3, 20.0, 1000.0)
    }

    /// Bilinear table lookup; `None` outside the speed range. CV torque below
    /// zero is fuel cut-off.
    pub fn internal_power(&self, omega: f64, torque: f64) -> Option<f64> {
        if !(omega >= self.omega_idle && omega <= self.omega_max) {
            return None;
        }
        if self.kind == PowertrainKind::Cv && torque < 0.0 {
            return Some(0.0);
        }
        let (i, ti) = bracket(&self.omega, omega);
        let (k, tk) = bracket(&self.torque, torque);
        let nm = self.torque.len();
        let p = |a: usize, b: usize| self.power[a * nm + b];
        let lo = p(i, k) + tk * (p(i, k + 1) - p(i, k));
        let hi = p(i + 1, k) + tk * (p(i + 1, k + 1) - p(i + 1, k));
        Some(lo + ti * (hi - lo))
    }

    pub fn max_torque(&self, omega: f64) -> f64 {
        interp(&self.omega, &self.torque_max, omega)
    }

    pub fn min_torque(&self, omega: f64) -> f64 {
        interp(&self.omega, &self.torque_min, omega)
    }

    pub fn additional_brake_torque(&self, omega: f64) -> f64 {
        interp(&self.omega, &self.brake_torque, omega)
    }

    /// Mechanical over internal power.
    pub fn efficiency(&self, omega: f64, torque: f64) -> Option<f64> {
        self.internal_power(omega, torque).map(|p| torque * omega / p)
    }
}

/// Segment index and fraction for clamped linear interpolation on a sorted grid.
pub(crate) fn bracket(grid: &[f64], x: f64) -> (usize, f64) {
    let n = grid.len();
    if x <= grid[0] {
        return (0, 0.0);
    }
    if x >= grid[n - 1] {
        return (n - 2, 1.0);
    }
    let i = grid.partition_point(|g| *g <= x) - 1;
    let i = i.min(n - 2);
    (i, (x - grid[i]) / (grid[i + 1] - grid[i]))
}

pub(crate) fn interp(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let (i, t) = bracket(grid, x);
    values[i] + t * (values[i + 1] - values[i])
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn synth_cv(rated_power: f64, omega_idle: f64, omega_max: f64) -> ActuatorMap {
    let span = omega_max - omega_idle;
    let omega_rated = omega_max - 0.19 * span;
    let omega_knee = omega_idle + 0.45 * (omega_rated - omega_idle);
    let omega_ramp = omega_idle + 0.25 * (omega_rated - omega_idle);
    let torque_peak = rated_power / omega_knee;
    let scale = rated_power / 350e3;

    let model = LossModel::Willans {
        e1: 2.128,
        p_aux: 0.02 * rated_power,
        m_friction: 0.01 * rated_power / omega_max,
        k3: 0.05 * rated_power / omega_max.powi(3),
    };

    let omega = linspace(omega_idle, omega_max, 61);
    let torque = linspace(0.0, torque_peak, 61);
    let torque_max: Vec<f64> = omega
        .iter()
        .map(|&w| {
            if w <= omega_ramp {
                torque_peak * (0.6 + 0.4 * (w - omega_idle) / (omega_ramp - omega_idle))
            } else if w <= omega_knee {
                torque_peak
            } else if w <= omega_rated {
                rated_power / w
            } else {
                let p = rated_power * (1.0 - 0.2 * (w - omega_rated) / (omega_max - omega_rated));
                p / w
            }
        })
        .collect();
    let brake_torque = omega.iter().map(|&w| -scale * (300.0 + 6.0 * (w - omega_idle))).collect();
    let power = omega.iter().flat_map(|&w| torque.iter().map(move |&m| model.power(w, m))).collect();
    ActuatorMap {
        kind: PowertrainKind::Cv,
        omega_idle,
        omega_max,
        torque_min: vec![0.0; omega.len()],
        omega,
        torque,
        power,
        torque_max,
        brake_torque,
        lhv: Some(DIESEL_LHV),
        model,
    }
}

fn synth_ev(rated_power: f64, omega_idle: f64, omega_max: f64) -> ActuatorMap {
    let omega_base = 0.3 * omega_max;
    let torque_peak = rated_power / omega_base;
    let scale = rated_power / 350e3;
    let model = LossModel::Electric { k0: 1000.0 * scale, k1: 0.02 * scale, k2: 0.03 / scale };

    let omega = linspace(omega_idle, omega_max, 81);
    let torque = linspace(-torque_peak, torque_peak, 81);
    let torque_max: Vec<f64> =
        omega.iter().map(|&w| if w <= omega_base { torque_peak } else { rated_power / w }).collect();
    let torque_min = torque_max.iter().map(|m| -m).collect();
    let power = omega.iter().flat_map(|&w| torque.iter().map(move |&m| model.power(w, m))).collect();
    ActuatorMap {
        kind: PowertrainKind::Ev,
        omega_idle,
        omega_max,
        brake_torque: vec![0.0; omega.len()],
        omega,
        torque,
        power,
        torque_max,
        torque_min,
        lhv: None,
        model,
    }
}
