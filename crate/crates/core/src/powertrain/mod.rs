//! Actuator maps, offline gear optimisation and the fitted surrogates used
//! by the online planner.

mod actuator;
pub mod artifact;
mod fit;
mod gear_map;
mod limits;

pub use actuator::{ActuatorMap, LossModel, PowertrainKind, DIESEL_LHV};
pub use fit::{nnls, FitResidual, PowerFit};
pub use gear_map::{GearMap, GearTable, GridSpec, WheelTables};
pub use limits::{max_inner_fit, FittedLimits, ForceLimitFit};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::VehicleParams;

/// Synthesis and fitting settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowertrainConfig {
    pub rated_power: f64,
    pub omega_idle: f64,
    pub omega_max: f64,
    pub grid: GridSpec,
    /// Speed band of the power-polynomial fit [m/s].
    pub fit_speed: (f64, f64),
    /// Lower end of the force-limit fit band [m/s].
    pub limit_v0: f64,
}

impl PowertrainConfig {
    pub fn for_kind(kind: PowertrainKind) -> Self {
        match kind {
            PowertrainKind::Cv => Self {
                rated_power: 350e3,
                omega_idle: 62.8,
                omega_max: 220.0,
                grid: GridSpec::default(),
                fit_speed: (50.0 / 3.6, 100.0 / 3.6),
                limit_v0: 8.0 / 3.6,
            },
            PowertrainKind::Ev => Self {
                rated_power: 350e3,
                omega_idle: 20.0,
                omega_max: 1000.0,
                grid: GridSpec::default(),
                fit_speed: (50.0 / 3.6, 100.0 / 3.6),
                limit_v0: 55.0 / 3.6,
            },
        }
    }
}

impl Default for PowertrainConfig {
    fn default() -> Self {
        Self::for_kind(PowertrainKind::Cv)
    }
}

/// Everything the online layer needs about the powertrain.
#[derive(Debug, Clone)]
pub struct Powertrain {
    pub kind: PowertrainKind,
    pub power: PowerFit,
    pub limits: ForceLimitFit,
    pub gear_map: Option<GearMap>,
}

impl Powertrain {
    /// Synthesises the actuator map and runs the full offline pipeline.
    pub fn synthesize(kind: PowertrainKind, params: &VehicleParams, config: &PowertrainConfig) -> Result<Self> {
        let map = ActuatorMap::synthesize(kind, config.rated_power, config.omega_idle, config.omega_max)?;
        Self::from_actuator(&map, params, config)
    }

    pub fn from_actuator(map: &ActuatorMap, params: &VehicleParams, config: &PowertrainConfig) -> Result<Self> {
        let tables = WheelTables::build(map, params, &config.grid)?;
        let gear_map = GearMap::optimise(&tables);
        let power = PowerFit::from_gear_map(&gear_map, config.fit_speed)?;
        let limits = ForceLimitFit::from_gear_map(&gear_map, config.limit_v0, None)?;
        Ok(Self { kind: map.kind, power, limits, gear_map: Some(gear_map) })
    }

    pub fn fitted_limits(&self, params: &VehicleParams) -> FittedLimits {
        FittedLimits { fit: self.limits, mass: params.mass }
    }

    /// Gear for a traction/brake split; 1 when no map is loaded.
    pub fn gear_for(&self, energy: f64, total_force: f64) -> usize {
        self.gear_map.as_ref().and_then(|m| m.gear_at(energy, total_force)).unwrap_or(1)
    }
}
