//! Online layer: heuristic speed and time budget, real-time-iteration SQP,
//! the travel-time costate update and the closed MPC loop.

mod costate;
mod driver;
mod heuristic;
mod metrics;
mod reference;
mod sqp;

pub use costate::CostateEstimator;
pub use driver::{f_curve, find_lambda_max, run_mpc, simulate_step, MpcRun, UpdateRecord};
pub use heuristic::{heuristic_trajectory, heuristic_velocity, SpeedProfile};
pub use metrics::{brake_norm, rms_jerk, rms_jerk_space, CostBreakdown};
pub use reference::{
    calibrate_w2, compare_cases, route_setup, solve_at_lambda, solve_reference, sweep_w2, CaseComparison, CaseSummary,
    ReferenceSolution, SweepPoint,
};
pub use sqp::{plan_trajectory, rti_step, sqp_solve, RtiOutput, SqpResult};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{RoadProfile, VehicleParams};
use crate::ocp::StageCostCoeffs;
use crate::powertrain::{FittedLimits, Powertrain};
use crate::qp::SolverOptions;

/// Vehicle, route, powertrain surrogates and energy price of one study.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub params: VehicleParams,
    pub profile: RoadProfile,
    pub powertrain: Powertrain,
    /// c_eg [EUR/J].
    pub energy_price: f64,
}

impl Scenario {
    pub fn coeffs(&self, w1: f64, w2: f64, lambda: f64) -> StageCostCoeffs {
        StageCostCoeffs::new(&self.powertrain.power, self.energy_price, self.params.mass, w1, w2, lambda)
    }

    pub fn limits(&self) -> FittedLimits {
        self.powertrain.fitted_limits(&self.params)
    }

    pub fn energy(&self, v: f64) -> f64 {
        0.5 * self.params.mass * v * v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HorizonMode {
    /// Horizon end pinned to the route end.
    Shrinking,
    /// Fixed-length window sliding with the vehicle.
    Moving,
}

/// Travel-time budget change applied once the vehicle passes `position`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub position: f64,
    /// Added to t_f [s].
    pub extra_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub mode: HorizonMode,
    /// Maximum horizon length s_Hmax [m].
    pub horizon: f64,
    /// Distance advanced per update Δζ [m], rounded to whole intervals.
    pub update_step: f64,
    /// Sample interval Δs [m].
    pub ds: f64,
    /// Linearisation step β ∈ (0, 1].
    pub beta: f64,
    pub w1: f64,
    pub w2: f64,
    /// Upper costate bound; searched at start-up when absent [EUR/s].
    pub lambda_max: Option<f64>,
    /// Holds λ_t fixed instead of running the costate update [EUR/s].
    pub lambda_fixed: Option<f64>,
    /// One QP per update when true, full SQP otherwise.
    pub rti: bool,
    pub sqp_max_iter: usize,
    /// Cruise speed of the heuristic guess [m/s].
    pub v_cruise: f64,
    /// λ_t is frozen once fewer than this many intervals remain.
    pub freeze_intervals: usize,
    pub disturbance: Option<Disturbance>,
    /// Audit every predicted plan against the nonlinear limits.
    pub audit: bool,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            mode: HorizonMode::Shrinking,
            horizon: 118_000.0,
            update_step: 295.0,
            ds: 295.0,
            beta: 1.0,
            w1: 0.0,
            w2: 0.0,
            lambda_max: None,
            lambda_fixed: None,
            rti: true,
            sqp_max_iter: 20,
            v_cruise: 80.0 / 3.6,
            freeze_intervals: 10,
            disturbance: None,
            audit: false,
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ds > 0.0 && self.horizon >= self.ds && self.update_step > 0.0) {
            return Err(Error::Config("need 0 < ds <= horizon and a positive update step".into()));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::Config(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if !(self.w1 >= 0.0 && self.w2 >= 0.0) {
            return Err(Error::Config("comfort weights must be non-negative".into()));
        }
        if !(self.v_cruise > 0.0) {
            return Err(Error::Config("cruise speed must be positive".into()));
        }
        if self.lambda_max.is_some_and(|l| !(l > 0.0)) || self.lambda_fixed.is_some_and(|l| !(l >= 0.0)) {
            return Err(Error::Config("costate bounds must be non-negative".into()));
        }
        Ok(())
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions { tol: self.tol, max_iter: self.max_iter, ..Default::default() }
    }

    /// Whole intervals per update.
    pub fn steps_per_update(&self) -> usize {
        ((self.update_step / self.ds).round() as usize).max(1)
    }
}
