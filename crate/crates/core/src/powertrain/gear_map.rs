//! Wheel-level tables and the offline gear choice over (E, F).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::actuator::{bracket, interp, ActuatorMap, PowertrainKind};
use crate::error::{Error, Result};
use crate::model::{TractionLimits, VehicleParams};

/// Resolution and extent of the common (E, F) grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_energy: usize,
    pub n_force: usize,
    /// Lowest grid speed [m/s]; the top comes from the fastest gear.
    pub v_min: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { n_energy: 200, n_force: 200, v_min: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GearTable {
    /// R(γ) [m].
    pub ratio: f64,
    pub energy_range: (f64, f64),
    /// Per E node; `None` where the gear cannot run.
    pub force_max: Vec<Option<f64>>,
    pub force_min: Vec<Option<f64>>,
    pub additional: Vec<Option<f64>>,
    /// Row-major (E, F); `None` where the gear cannot deliver the force.
    pub power: Vec<Option<f64>>,
}

/// Powertrain tables mapped through every gear onto one (E, F) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WheelTables {
    pub kind: PowertrainKind,
    pub mass: f64,
    pub energy: Vec<f64>,
    pub force: Vec<f64>,
    pub gears: Vec<GearTable>,
}

impl WheelTables {
    pub fn build(map: &ActuatorMap, params: &VehicleParams, grid: &GridSpec) -> Result<Self> {
        params.validate()?;
        if grid.n_energy < 2 || grid.n_force < 2 {
            return Err(Error::Construction("grid needs at least 2×2 cells".into()));
        }
        let m = params.mass;
        let ratios: Vec<f64> = (1..=params.gear_count()).map(|g| params.overall_ratio(g)).collect();
        let v_top = ratios.iter().map(|r| map.omega_max * r).fold(0.0, f64::max);
        let v_lo = grid.v_min.max(ratios.iter().map(|r| map.omega_idle * r).fold(f64::INFINITY, f64::min));
        if !(v_lo < v_top) {
            return Err(Error::Construction("grid speed range is empty".into()));
        }
        let energy = linspace(0.5 * m * v_lo * v_lo, 0.5 * m * v_top * v_top, grid.n_energy);
        let f_hi =
            ratios.iter().map(|r| map.torque_max.iter().fold(0.0, |a: f64, t| a.max(*t)) / r).fold(0.0, f64::max);
        let force = linspace(params.brake_force_min.min(-1.0), f_hi, grid.n_force);

        let gears = ratios
            .iter()
            .enumerate()
            .map(|(g, &ratio)| {
                let range = (0.5 * m * (map.omega_idle * ratio).powi(2), 0.5 * m * (map.omega_max * ratio).powi(2));
                if range.1 < energy[0] || range.0 > energy[energy.len() - 1] {
                    return Err(Error::Construction(format!("gear {} has no operating point on the grid", g + 1)));
                }
                Ok(gear_table(map, &energy, &force, ratio, range, m))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { kind: map.kind, mass: m, energy, force, gears })
    }
}

fn gear_table(map: &ActuatorMap, energy: &[f64], force: &[f64], ratio: f64, range: (f64, f64), mass: f64) -> GearTable {
    let n_f = force.len();
    let omega_of = |e: f64| (2.0 * e / mass).sqrt() / ratio;
    let inside = |e: f64| e >= range.0 && e <= range.1;
    let force_max: Vec<Option<f64>> =
        energy.iter().map(|&e| inside(e).then(|| map.max_torque(omega_of(e)) / ratio)).collect();
    let force_min: Vec<Option<f64>> =
        energy.iter().map(|&e| inside(e).then(|| map.min_torque(omega_of(e)) / ratio)).collect();
    let additional: Vec<Option<f64>> =
        energy.iter().map(|&e| inside(e).then(|| map.additional_brake_torque(omega_of(e)) / ratio)).collect();
    let power = energy
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, &e)| {
            let w = omega_of(e);
            let (fmin, fmax) = (force_min[i], force_max[i]);
            (0..n_f).map(move |k| {
                let (fmin, fmax) = (fmin?, fmax?);
                let f = force[k];
                if f > fmax {
                    None
                } else {
                    // below the envelope the service brakes absorb the remainder
                    map.internal_power(w, f.max(fmin) * ratio)
                }
            })
        })
        .collect();
    GearTable { ratio, energy_range: range, force_max, force_min, additional, power }
}

/// Offline gear choice plus the wheel-level force envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GearMap {
    pub kind: PowertrainKind,
    pub mass: f64,
    pub energy: Vec<f64>,
    pub force: Vec<f64>,
    /// Row-major (E, F); 0 marks an infeasible cell, gears are 1-based.
    pub gear: Vec<u8>,
    /// Internal power with the chosen gear [W].
    pub power: Vec<Option<f64>>,
    pub force_max: Vec<f64>,
    pub force_min: Vec<f64>,
    /// Most negative additional-brake force over gears (0 for EV).
    pub additional_min: Vec<f64>,
}

impl GearMap {
    pub fn optimise(tables: &WheelTables) -> Self {
        let n_e = tables.energy.len();
        let n_f = tables.force.len();
        let gears = &tables.gears;
        let running =
            |i: usize| -> Vec<usize> { (0..gears.len()).filter(|&g| gears[g].force_max[i].is_some()).collect() };
        let force_max: Vec<f64> =
            (0..n_e).map(|i| running(i).iter().map(|&g| gears[g].force_max[i].unwrap()).fold(0.0, f64::max)).collect();
        let force_min: Vec<f64> =
            (0..n_e).map(|i| running(i).iter().map(|&g| gears[g].force_min[i].unwrap()).fold(0.0, f64::min)).collect();
        let additional_min: Vec<f64> =
            (0..n_e).map(|i| running(i).iter().map(|&g| gears[g].additional[i].unwrap()).fold(0.0, f64::min)).collect();

        let cells: Vec<(u8, Option<f64>)> = (0..n_e)
            .into_par_iter()
            .flat_map_iter(|i| {
                let run = running(i);
                let fa_min = additional_min[i];
                (0..n_f).map(move |k| {
                    let f = tables.force[k];
                    let g = select_gear(tables, &run, i, k, f, fa_min);
                    match g {
                        Some(g) => ((g + 1) as u8, gears[g].power[i * n_f + k]),
                        None => (0, None),
                    }
                })
            })
            .collect();
        let (gear, power) = cells.into_iter().unzip();
        Self {
            kind: tables.kind,
            mass: tables.mass,
            energy: tables.energy.clone(),
            force: tables.force.clone(),
            gear,
            power,
            force_max,
            force_min,
            additional_min,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.energy.len(), self.force.len())
    }

    /// Gear of the cell nearest to (E, F); `None` when infeasible or off-grid.
    pub fn gear_at(&self, energy: f64, force: f64) -> Option<usize> {
        let (n_e, n_f) = self.shape();
        if energy < self.energy[0] || energy > self.energy[n_e - 1] {
            return None;
        }
        let f = force.clamp(self.force[0], self.force[n_f - 1]);
        let i = nearest(&self.energy, energy);
        let k = nearest(&self.force, f);
        match self.gear[i * n_f + k] {
            0 => None,
            g => Some(g as usize),
        }
    }

    pub fn speed_of(&self, energy: f64) -> f64 {
        (2.0 * energy / self.mass).sqrt()
    }

    pub fn additional_min_at(&self, energy: f64) -> f64 {
        interp(&self.energy, &self.additional_min, energy)
    }
}

impl TractionLimits for GearMap {
    fn force_max(&self, energy: f64) -> f64 {
        interp(&self.energy, &self.force_max, energy)
    }

    fn force_min(&self, energy: f64) -> f64 {
        interp(&self.energy, &self.force_min, energy)
    }
}

/// Gear rule for a single cell. Positive force: cheapest gear. CV braking:
/// highest gear whose additional brake covers the force, otherwise the gear
/// with the strongest additional brake. Ties go to the lowest index.
fn select_gear(
    tables: &WheelTables,
    running: &[usize],
    i: usize,
    k: usize,
    force: f64,
    additional_min: f64,
) -> Option<usize> {
    let gears = &tables.gears;
    let n_f = tables.force.len();
    if running.is_empty() {
        return None;
    }
    if tables.kind == PowertrainKind::Ev || force >= 0.0 {
        let mut best: Option<(usize, f64)> = None;
        for &g in running {
            if let Some(p) = gears[g].power[i * n_f + k] {
                if best.is_none_or(|(_, bp)| p < bp) {
                    best = Some((g, p));
                }
            }
        }
        return best.map(|(g, _)| g);
    }
    if force >= additional_min {
        return running.iter().rev().copied().find(|&g| gears[g].additional[i].unwrap() <= force);
    }
    let mut best = running[0];
    for &g in running {
        if gears[g].additional[i].unwrap() < gears[best].additional[i].unwrap() {
            best = g;
        }
    }
    Some(best)
}

fn nearest(grid: &[f64], x: f64) -> usize {
    let (i, t) = bracket(grid, x);
    if t < 0.5 {
        i
    } else {
        i + 1
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_gear_params() -> VehicleParams {
        VehicleParams { transmission_ratios: vec![6.0, 3.0, 1.5], ..VehicleParams::heavy_truck() }
    }

    /// Straight per-cell enumeration of the gear rules.
    fn enumerate(tables: &WheelTables) -> Vec<u8> {
        let n_f = tables.force.len();
        let mut out = Vec::new();
        for i in 0..tables.energy.len() {
            let feasible: Vec<usize> = (0..tables.gears.len())
                .filter(|&g| {
                    let (lo, hi) = tables.gears[g].energy_range;
                    tables.energy[i] >= lo && tables.energy[i] <= hi
                })
                .collect();
            let fa_min = feasible.iter().map(|&g| tables.gears[g].additional[i].unwrap()).fold(0.0, f64::min);
            for k in 0..n_f {
                let f = tables.force[k];
                let mut pick = 0u8;
                if tables.kind == PowertrainKind::Cv && f < 0.0 && !feasible.is_empty() {
                    let fa = |g: usize| tables.gears[g].additional[i].unwrap();
                    if f >= fa_min {
                        for &g in &feasible {
                            if fa(g) <= f {
                                pick = (g + 1) as u8;
                            }
                        }
                    } else {
                        let mut best = f64::INFINITY;
                        for &g in &feasible {
                            if fa(g) < best {
                                best = fa(g);
                                pick = (g + 1) as u8;
                            }
                        }
                    }
                } else {
                    let mut best = f64::INFINITY;
                    for &g in &feasible {
                        if let Some(p) = tables.gears[g].power[i * n_f + k] {
                            if p < best {
                                best = p;
                                pick = (g + 1) as u8;
                            }
                        }
                    }
                }
                out.push(pick);
            }
        }
        out
    }

    #[test]
    fn matches_enumeration_three_gears() {
        let params = three_gear_params();
        let grid = GridSpec { n_energy: 20, n_force: 20, v_min: 1.0 };
        let tables = WheelTables::build(&ActuatorMap::default_cv(), &params, &grid).unwrap();
        let map = GearMap::optimise(&tables);
        assert_eq!(map.gear, enumerate(&tables));
    }

    #[test]
    fn single_gear_is_identity() {
        let params = VehicleParams::electric_truck();
        let grid = GridSpec { n_energy: 30, n_force: 30, v_min: 1.0 };
        let tables = WheelTables::build(&ActuatorMap::default_ev(), &params, &grid).unwrap();
        let map = GearMap::optimise(&tables);
        assert!(map.gear.iter().all(|&g| g <= 1));
        assert!(map.gear.contains(&1));
    }

    #[test]
    fn wheel_force_is_torque_over_ratio() {
        let mut params = VehicleParams::electric_truck();
        // R = r_w / (r_tg r_fg) = 0.1 m
        params.wheel_radius = 0.3;
        params.final_gear_ratio = 3.0;
        params.transmission_ratios = vec![1.0];
        let mut map = ActuatorMap::default_ev();
        map.torque_max = vec![2000.0; map.omega.len()];
        map.omega_idle = 50.0;
        let grid = GridSpec { n_energy: 10, n_force: 10, v_min: 0.1 };
        let tables = WheelTables::build(&map, &params, &grid).unwrap();
        let g = &tables.gears[0];
        assert!((g.ratio - 0.1).abs() < 1e-15);
        assert!((g.energy_range.0 - 500e3).abs() < 1e-6);
        for f in g.force_max.iter().flatten() {
            assert!((f - 20_000.0).abs() < 1e-9);
        }
    }

    #[test]
    fn higher_gear_shifts_energy_window_up() {
        let params = VehicleParams::heavy_truck();
        let tables = WheelTables::build(&ActuatorMap::default_cv(), &params, &GridSpec::default()).unwrap();
        for w in tables.gears.windows(2) {
            assert!(w[1].energy_range.0 > w[0].energy_range.0);
            assert!(w[1].energy_range.1 > w[0].energy_range.1);
        }
    }

    #[test]
    fn optimal_power_is_minimal() {
        let params = VehicleParams::heavy_truck();
        let grid = GridSpec { n_energy: 40, n_force: 40, v_min: 1.0 };
        let tables = WheelTables::build(&ActuatorMap::default_cv(), &params, &grid).unwrap();
        let map = GearMap::optimise(&tables);
        let n_f = tables.force.len();
        for i in 0..tables.energy.len() {
            for k in 0..n_f {
                if tables.force[k] < 0.0 || map.gear[i * n_f + k] == 0 {
                    continue;
                }
                let chosen = map.power[i * n_f + k].unwrap();
                for g in &tables.gears {
                    if let Some(p) = g.power[i * n_f + k] {
                        assert!(chosen <= p);
                    }
                }
            }
        }
    }

    #[test]
    fn cv_envelope_signs() {
        let params = VehicleParams::heavy_truck();
        let grid = GridSpec { n_energy: 40, n_force: 40, v_min: 1.0 };
        let tables = WheelTables::build(&ActuatorMap::default_cv(), &params, &grid).unwrap();
        let map = GearMap::optimise(&tables);
        assert!(map.force_min.iter().all(|&f| f == 0.0));
        assert!(map.additional_min.iter().all(|&f| f <= 0.0));
    }
}
