//! Dynamic programming over `(E, a)` for the λ-adjoined horizon problem.
//!
//! The lattice holds `E` on a uniform grid and `a` on a uniform grid; the
//! decision is the next acceleration level, so `j = (a' − a)/Δs`. Because
//! `E_{k+1} = E_k + Δs m a_k` does not depend on the decision, the next
//! value is interpolated along `E` only. Stage costs are exact.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{State, TractionLimits, VehicleParams};
use crate::ocp::{split_force, stage_cost, HorizonGrid, HorizonPlan, StageCostCoeffs};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpGrid {
    pub energy_levels: usize,
    pub accel_levels: usize,
    pub accel_range: (f64, f64),
}

impl Default for DpGrid {
    fn default() -> Self {
        Self { energy_levels: 81, accel_levels: 81, accel_range: (-0.4, 0.4) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpSolution {
    /// Value of the start state on the lattice.
    pub lattice_cost: f64,
    /// Exact cost of the rolled-out policy.
    pub cost: f64,
    pub plan: HorizonPlan,
    /// Largest change of the value function between neighbouring energy
    /// nodes at the first stage, a proxy for the interpolation error.
    pub interpolation_bound: f64,
}

struct Lattice {
    e: Vec<f64>,
    a: Vec<f64>,
}

impl Lattice {
    /// Linear interpolation of `v[i * na + q]` along `E` at fixed `q`.
    fn value(&self, v: &[f64], energy: f64, q: usize) -> f64 {
        let ne = self.e.len();
        let na = self.a.len();
        let (e0, e1) = (self.e[0], self.e[ne - 1]);
        if energy < e0 - 1e-9 * e0 || energy > e1 + 1e-9 * e1 {
            return f64::INFINITY;
        }
        let h = (e1 - e0) / (ne - 1) as f64;
        let x = ((energy - e0) / h).clamp(0.0, (ne - 1) as f64);
        let i = (x.floor() as usize).min(ne - 2);
        let w = x - i as f64;
        let (lo, hi) = (v[i * na + q], v[(i + 1) * na + q]);
        if w == 0.0 {
            lo
        } else if w == 1.0 {
            hi
        } else if lo.is_finite() && hi.is_finite() {
            (1.0 - w) * lo + w * hi
        } else {
            f64::INFINITY
        }
    }
}

/// Best decision from `(energy, accel)` at interval `k`.
#[allow(clippy::too_many_arguments)]
fn best_move(
    k: usize,
    energy: f64,
    accel: f64,
    next: &[f64],
    lat: &Lattice,
    grid: &HorizonGrid,
    coeffs: &StageCostCoeffs,
    limits: &dyn TractionLimits,
    params: &VehicleParams,
) -> Option<(f64, usize, f64, f64)> {
    let m = params.mass;
    let total = m * accel + params.drag_per_energy() * energy + grid.grade_force[k];
    let (force, brake) = split_force(total, energy, limits, coeffs, params)?;
    let e_next = energy + grid.ds * m * accel;
    let (lo, hi) = grid.node_band(k + 1);
    if e_next < 0.5 * m * lo * lo * (1.0 - 1e-12) || e_next > 0.5 * m * hi * hi * (1.0 + 1e-12) {
        return None;
    }
    let mut best: Option<(f64, usize, f64, f64)> = None;
    for (q, &a_next) in lat.a.iter().enumerate() {
        let j = (a_next - accel) / grid.ds;
        if j < params.jerk_min - 1e-12 || j > params.jerk_max + 1e-12 {
            continue;
        }
        let tail = lat.value(next, e_next, q);
        if !tail.is_finite() {
            continue;
        }
        let c = grid.ds * stage_cost(energy, accel, j, force, coeffs).ok()? + tail;
        if best.is_none_or(|b| c < b.0) {
            best = Some((c, q, force, brake));
        }
    }
    best
}

/// Solves the horizon problem by backward value iteration from `initial`.
/// The initial acceleration must lie on the acceleration lattice.
pub fn dp_solve(
    grid: &HorizonGrid,
    coeffs: &StageCostCoeffs,
    limits: &(dyn TractionLimits + Sync),
    params: &VehicleParams,
    initial: &State,
    dp: &DpGrid,
) -> Result<DpSolution> {
    let n = grid.n;
    if n == 0 || dp.energy_levels < 2 || dp.accel_levels < 2 {
        return Err(Error::Dimension("DP needs at least one interval and two levels per axis".into()));
    }
    let (mut v_lo, mut v_hi) = (f64::INFINITY, 0.0_f64);
    for k in 0..n {
        v_lo = v_lo.min(grid.v_min[k]);
        v_hi = v_hi.max(grid.v_max[k]);
    }
    let m = params.mass;
    let (e_lo, e_hi) = (0.5 * m * v_lo * v_lo, 0.5 * m * v_hi * v_hi);
    let (a_lo, a_hi) = (dp.accel_range.0.max(params.accel_min), dp.accel_range.1.min(params.accel_max));
    let lat = Lattice {
        e: (0..dp.energy_levels).map(|i| e_lo + (e_hi - e_lo) * i as f64 / (dp.energy_levels - 1) as f64).collect(),
        a: (0..dp.accel_levels).map(|p| a_lo + (a_hi - a_lo) * p as f64 / (dp.accel_levels - 1) as f64).collect(),
    };
    let step = (a_hi - a_lo) / (dp.accel_levels - 1) as f64;
    let a0_level = ((initial.accel - a_lo) / step).round();
    if !(0.0..dp.accel_levels as f64).contains(&a0_level) || (lat.a[a0_level as usize] - initial.accel).abs() > 1e-9 {
        return Err(Error::InvalidParams("initial acceleration is not on the DP lattice".into()));
    }
    let (ne, na) = (lat.e.len(), lat.a.len());

    // terminal values
    let (lo, hi) = grid.node_band(n);
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    values[n] = (0..ne * na)
        .map(|c| {
            let e = lat.e[c / na];
            let a = lat.a[c % na];
            let v = (2.0 * e / m).sqrt();
            let ok = v >= lo * (1.0 - 1e-12) && v <= hi * (1.0 + 1e-12);
            if ok && a >= params.accel_min && a <= params.accel_max {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect();
    for k in (1..n).rev() {
        let (lo, hi) = grid.node_band(k);
        let next = &values[k + 1];
        let cur: Vec<f64> = (0..ne * na)
            .into_par_iter()
            .map(|c| {
                let e = lat.e[c / na];
                let v = (2.0 * e / m).sqrt();
                if v < lo * (1.0 - 1e-12) || v > hi * (1.0 + 1e-12) {
                    return f64::INFINITY;
                }
                best_move(k, e, lat.a[c % na], next, &lat, grid, coeffs, limits, params).map_or(f64::INFINITY, |b| b.0)
            })
            .collect();
        values[k] = cur;
    }

    let interpolation_bound = if n > 1 {
        let v1 = &values[1];
        let mut b: f64 = 0.0;
        for i in 0..ne - 1 {
            for q in 0..na {
                let (x, y) = (v1[i * na + q], v1[(i + 1) * na + q]);
                if x.is_finite() && y.is_finite() {
                    b = b.max((x - y).abs());
                }
            }
        }
        b
    } else {
        0.0
    };

    // forward roll-out from the exact start state
    let mut plan = HorizonPlan {
        energy: vec![initial.energy],
        accel: vec![initial.accel],
        jerk: Vec::with_capacity(n),
        force: Vec::with_capacity(n),
        brake: Vec::with_capacity(n),
    };
    let mut lattice_cost = None;
    let mut cost = 0.0;
    for k in 0..n {
        let (e, a) = (plan.energy[k], plan.accel[k]);
        let (c, q, f, fb) = best_move(k, e, a, &values[k + 1], &lat, grid, coeffs, limits, params)
            .ok_or_else(|| Error::Infeasible(format!("no feasible DP move at interval {k}")))?;
        lattice_cost.get_or_insert(c);
        let j = (lat.a[q] - a) / grid.ds;
        cost += grid.ds * stage_cost(e, a, j, f, coeffs)?;
        plan.jerk.push(j);
        plan.force.push(f);
        plan.brake.push(fb);
        plan.energy.push(e + grid.ds * m * a);
        plan.accel.push(lat.a[q]);
    }
    Ok(DpSolution { lattice_cost: lattice_cost.unwrap_or(0.0), cost, plan, interpolation_bound })
}
