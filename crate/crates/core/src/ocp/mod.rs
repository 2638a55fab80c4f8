//! Discretised horizon problem in the kinetic-energy domain and its
//! assembly into a banded QP.
//!
//! Nodes `k = 0..=N` carry `E_k, a_k`; interval `k` carries `j_k, F_k,
//! F_brk,k` and is charged `Δs · ℓ(E_k, a_k, j_k, F_k)`. Dynamics are
//! forward Euler. The only non-quadratic cost term, `c E^{-1/2}`, enters
//! through its second-order Taylor expansion about the linearisation
//! trajectory `Ê`; the convex traction limit enters through its tangent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{RoadProfile, State, TractionLimits, VehicleParams};
use crate::powertrain::{ForceLimitFit, PowerFit, PowertrainKind, DIESEL_LHV};
use crate::qp::QpProblem;

/// Diesel density [kg/l].
pub const DIESEL_DENSITY: f64 = 0.832;

/// Fuel price in EUR/litre to EUR per joule of fuel energy.
pub fn fuel_price_per_joule(eur_per_litre: f64) -> f64 {
    eur_per_litre / (DIESEL_DENSITY * DIESEL_LHV)
}

/// Electricity price in EUR/kWh to EUR/J.
pub fn electricity_price_per_joule(eur_per_kwh: f64) -> f64 {
    eur_per_kwh / 3.6e6
}

/// Horizon `[start, start + length]` split into `n` equal intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonGrid {
    pub start: f64,
    pub length: f64,
    pub n: usize,
    pub ds: f64,
    /// Mean grade resistance per interval [N].
    pub grade_force: Vec<f64>,
    /// Speed band per interval [m/s].
    pub v_min: Vec<f64>,
    pub v_max: Vec<f64>,
}

impl HorizonGrid {
    pub fn new(profile: &RoadProfile, params: &VehicleParams, start: f64, length: f64, n: usize) -> Result<Self> {
        let end = start + length;
        if !(start >= 0.0 && length >= 0.0 && end <= profile.length() * (1.0 + 1e-12)) {
            return Err(Error::OutOfRange { position: end, length: profile.length() });
        }
        if n == 0 && length > 0.0 {
            return Err(Error::Dimension("a non-empty horizon needs at least one interval".into()));
        }
        let ds = if n > 0 { length / n as f64 } else { 0.0 };
        let end = end.min(profile.length());
        let mut grid = Self {
            start,
            length,
            n,
            ds,
            grade_force: Vec::with_capacity(n),
            v_min: Vec::with_capacity(n),
            v_max: Vec::with_capacity(n),
        };
        for k in 0..n {
            let s0 = start + k as f64 * ds;
            let s1 = if k + 1 == n { end } else { start + (k + 1) as f64 * ds };
            grid.grade_force.push(profile.mean_grade_force(s0, s1, params)?);
            let (lo, hi) = profile.band_over(s0, s1)?;
            grid.v_min.push(lo);
            grid.v_max.push(hi);
        }
        Ok(grid)
    }

    /// Horizon starting at `start` with length `min(max_length, s_f − start)`
    /// and an interval close to `ds`.
    pub fn on_route(
        profile: &RoadProfile,
        params: &VehicleParams,
        start: f64,
        max_length: f64,
        ds: f64,
    ) -> Result<Self> {
        if !(ds > 0.0) {
            return Err(Error::InvalidParams(format!("sample interval must be positive, got {ds}")));
        }
        let length = max_length.min(profile.length() - start).max(0.0);
        let n = (length / ds - 1e-9).ceil().max(0.0) as usize;
        let length = if n == 0 { 0.0 } else { length };
        Self::new(profile, params, start, length, n)
    }

    /// Position of node `k`; the last node sits exactly on the horizon end.
    pub fn position(&self, k: usize) -> f64 {
        if k == self.n {
            self.start + self.length
        } else {
            self.start + k as f64 * self.ds
        }
    }

    /// Speed band at node `k`: the intersection of the adjacent intervals.
    pub fn node_band(&self, k: usize) -> (f64, f64) {
        let mut lo = 0.0_f64;
        let mut hi = f64::INFINITY;
        for i in [k.wrapping_sub(1), k] {
            if i < self.n {
                lo = lo.max(self.v_min[i]);
                hi = hi.min(self.v_max[i]);
            }
        }
        (lo, hi)
    }
}

/// Coefficients of the λ-adjoined stage cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageCostCoeffs {
    pub kind: PowertrainKind,
    /// Energy price c_eg [EUR/J].
    pub energy_price: f64,
    /// Power polynomial `p0 + p1 v³ + p2 v F + p3 v F²`.
    pub power: [f64; 4],
    pub mass: f64,
    pub w1: f64,
    pub w2: f64,
    /// Travel-time costate λ_t [EUR/s].
    pub lambda: f64,
}

impl StageCostCoeffs {
    pub fn new(fit: &PowerFit, energy_price: f64, mass: f64, w1: f64, w2: f64, lambda: f64) -> Self {
        Self { kind: fit.kind, energy_price, power: fit.coeffs, mass, w1, w2, lambda }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.energy_price > 0.0 && self.mass > 0.0) {
            return Err(Error::InvalidParams("energy price and mass must be positive".into()));
        }
        if !(self.w1 >= 0.0 && self.w2 >= 0.0 && self.lambda >= 0.0) {
            return Err(Error::InvalidParams("w1, w2 and lambda must be non-negative".into()));
        }
        Ok(())
    }

    /// Price of one second of driving: `c_eg p0 + λ_t` [EUR/s].
    pub fn time_price(&self) -> f64 {
        self.energy_price * self.power[0] + self.lambda
    }

    /// Coefficient `c` of the `c E^{-1/2}` cost term.
    pub fn sqrt_coeff(&self) -> f64 {
        self.time_price() * (self.mass / 2.0).sqrt()
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }
}

/// Exact stage cost per metre [EUR/m].
pub fn stage_cost(energy: f64, a: f64, j: f64, force: f64, c: &StageCostCoeffs) -> Result<f64> {
    if !(energy > 0.0 && energy.is_finite()) {
        return Err(Error::domain(format!("kinetic energy must be positive, got {energy}")));
    }
    let [_, p1, p2, p3] = c.power;
    let energy_terms = 2.0 * p1 * energy / c.mass + p2 * force + p3 * force * force;
    Ok(c.sqrt_coeff() / energy.sqrt() + c.energy_price * energy_terms + c.w1 * a * a + c.w2 * j * j)
}

/// Energy part of the stage cost only, with no time price and no comfort terms [EUR/m].
pub fn energy_cost_rate(energy: f64, force: f64, c: &StageCostCoeffs) -> f64 {
    let v = (2.0 * energy / c.mass).sqrt();
    let [p0, p1, p2, p3] = c.power;
    c.energy_price * (p0 + p1 * v.powi(3) + p2 * v * force + p3 * v * force * force) / v
}

/// Cheapest split of the wheel force `total = F + F_brk` that respects the
/// traction envelope and the brake box; `None` when no split exists.
pub fn split_force(
    total: f64,
    energy: f64,
    limits: &dyn TractionLimits,
    coeffs: &StageCostCoeffs,
    params: &VehicleParams,
) -> Option<(f64, f64)> {
    let f_hi = limits.force_max(energy).min(total - params.brake_force_min);
    let f_lo = match coeffs.kind {
        PowertrainKind::Cv => total.max(0.0),
        PowertrainKind::Ev => total.max(limits.force_min(energy)),
    };
    if f_lo > f_hi + 1e-9 * (1.0 + f_hi.abs()) {
        return None;
    }
    let [_, _, p2, p3] = coeffs.power;
    let f = if p3 > 0.0 { (-p2 / (2.0 * p3)).clamp(f_lo, f_hi.max(f_lo)) } else { f_lo };
    Some((f, total - f))
}

/// Tangent of `f(E) = E^{-1/2}` at `Ê`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqrtTangent {
    pub at: f64,
    pub value: f64,
    pub slope: f64,
}

impl SqrtTangent {
    pub fn eval(&self, energy: f64) -> f64 {
        self.value + self.slope * (energy - self.at)
    }
}

pub fn linearize_sqrt_term(e_hat: f64) -> Result<SqrtTangent> {
    if !(e_hat > 0.0 && e_hat.is_finite()) {
        return Err(Error::domain(format!("linearisation energy must be positive, got {e_hat}")));
    }
    let value = e_hat.powf(-0.5);
    Ok(SqrtTangent { at: e_hat, value, slope: -0.5 * value / e_hat })
}

/// `c0 + c1 E`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub c0: f64,
    pub c1: f64,
}

impl Affine {
    pub fn constant(c0: f64) -> Self {
        Self { c0, c1: 0.0 }
    }

    pub fn eval(&self, energy: f64) -> f64 {
        self.c0 + self.c1 * energy
    }
}

/// Linearised limits of one interval. Upper limits are the minimum of their
/// rows, lower limits the maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLimits {
    pub force_max: Vec<Affine>,
    pub force_min: Vec<Affine>,
    pub accel_max: Vec<Affine>,
    pub accel_min: Vec<Affine>,
}

impl LinearLimits {
    pub fn force_upper(&self, energy: f64) -> f64 {
        self.force_max.iter().map(|r| r.eval(energy)).fold(f64::INFINITY, f64::min)
    }

    pub fn force_lower(&self, energy: f64) -> f64 {
        self.force_min.iter().map(|r| r.eval(energy)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn accel_upper(&self, energy: f64) -> f64 {
        self.accel_max.iter().map(|r| r.eval(energy)).fold(f64::INFINITY, f64::min)
    }

    pub fn accel_lower(&self, energy: f64) -> f64 {
        self.accel_min.iter().map(|r| r.eval(energy)).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Per-interval limits with the `c/√E` terms replaced by tangents at `Ê`.
pub fn linearized_limits(
    kind: PowertrainKind,
    e_hat: &[f64],
    fit: &ForceLimitFit,
    grid: &HorizonGrid,
    params: &VehicleParams,
) -> Result<Vec<LinearLimits>> {
    if e_hat.len() < grid.n {
        return Err(Error::Dimension(format!("need {} linearisation energies, got {}", grid.n, e_hat.len())));
    }
    let root = (params.mass / 2.0).sqrt();
    let m = params.mass;
    let k_e = params.drag_per_energy();
    let mut out = Vec::with_capacity(grid.n);
    for k in 0..grid.n {
        let t = linearize_sqrt_term(e_hat[k])?;
        // c1 · √(m/2) · (value + slope (E − Ê))
        let tangent = |c1: f64| Affine { c0: c1 * root * (t.value - t.slope * t.at), c1: c1 * root * t.slope };
        let force_max = vec![Affine::constant(fit.f_max), tangent(fit.y1).shift(fit.y0)];
        let force_min = match kind {
            PowertrainKind::Cv => vec![Affine::constant(0.0)],
            PowertrainKind::Ev => vec![Affine::constant(fit.f_min), tangent(fit.x1).shift(fit.x0)],
        };
        let fa = grid.grade_force[k];
        let to_accel = |f: &Affine, extra: f64| Affine { c0: (f.c0 + extra - fa) / m, c1: (f.c1 - k_e) / m };
        let mut accel_max = vec![Affine::constant(params.accel_max)];
        accel_max.extend(force_max.iter().map(|f| to_accel(f, 0.0)));
        let mut accel_min = vec![Affine::constant(params.accel_min)];
        accel_min.extend(force_min.iter().map(|f| to_accel(f, params.brake_force_min)));
        out.push(LinearLimits { force_max, force_min, accel_max, accel_min });
    }
    Ok(out)
}

impl Affine {
    fn shift(self, c: f64) -> Self {
        Self { c0: self.c0 + c, c1: self.c1 }
    }
}

/// Index map of the decision vector
/// `[E_0..E_N, a_0..a_N, j_0..j_{N-1}, F_0..F_{N-1}, F_brk,0..F_brk,N-1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
}

impl Layout {
    pub fn len(&self) -> usize {
        5 * self.n + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn energy(&self, k: usize) -> usize {
        k
    }

    pub fn accel(&self, k: usize) -> usize {
        self.n + 1 + k
    }

    pub fn jerk(&self, k: usize) -> usize {
        2 * (self.n + 1) + k
    }

    pub fn force(&self, k: usize) -> usize {
        2 * (self.n + 1) + self.n + k
    }

    pub fn brake(&self, k: usize) -> usize {
        2 * (self.n + 1) + 2 * self.n + k
    }
}

/// Physical horizon plan unpacked from a QP solution.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonPlan {
    pub energy: Vec<f64>,
    pub accel: Vec<f64>,
    pub jerk: Vec<f64>,
    pub force: Vec<f64>,
    pub brake: Vec<f64>,
}

impl HorizonPlan {
    pub fn unpack(layout: Layout, x: &[f64]) -> Self {
        let n = layout.n;
        Self {
            energy: (0..=n).map(|k| x[layout.energy(k)]).collect(),
            accel: (0..=n).map(|k| x[layout.accel(k)]).collect(),
            jerk: (0..n).map(|k| x[layout.jerk(k)]).collect(),
            force: (0..n).map(|k| x[layout.force(k)]).collect(),
            brake: (0..n).map(|k| x[layout.brake(k)]).collect(),
        }
    }

    pub fn pack(&self) -> Vec<f64> {
        let mut x = self.energy.clone();
        x.extend(&self.accel);
        x.extend(&self.jerk);
        x.extend(&self.force);
        x.extend(&self.brake);
        x
    }

    pub fn intervals(&self) -> usize {
        self.jerk.len()
    }

    /// Travel time `Σ Δs √(m / 2E_k)`.
    pub fn travel_time(&self, ds: f64, mass: f64) -> f64 {
        self.energy[..self.intervals()].iter().map(|e| ds * (mass / (2.0 * e)).sqrt()).sum()
    }

    /// `Σ Δs ℓ(E_k, a_k, j_k, F_k)`.
    pub fn cost(&self, ds: f64, coeffs: &StageCostCoeffs) -> Result<f64> {
        let mut acc = 0.0;
        for k in 0..self.intervals() {
            acc += ds * stage_cost(self.energy[k], self.accel[k], self.jerk[k], self.force[k], coeffs)?;
        }
        Ok(acc)
    }
}

/// Assembled QP together with its layout.
#[derive(Debug, Clone)]
pub struct HorizonQp {
    pub problem: QpProblem,
    pub layout: Layout,
}

impl HorizonQp {
    /// Physical plan from a (scaled) QP primal vector.
    pub fn plan(&self, x: &[f64]) -> HorizonPlan {
        HorizonPlan::unpack(self.layout, &self.problem.to_physical(x))
    }

    /// Gradient of the physical objective at a physical point.
    pub fn physical_gradient(&self, x_phys: &[f64]) -> Vec<f64> {
        let p = &self.problem;
        let xs = p.from_physical(x_phys);
        let hx = p.hess_mul(&xs);
        (0..p.n).map(|i| p.obj_scale * (hx[i] + p.linear[i]) / p.scale[i]).collect()
    }
}

/// Builds the horizon QP linearised about `e_hat` (N + 1 energies) with the
/// initial state pinned.
pub fn assemble_qp(
    grid: &HorizonGrid,
    coeffs: &StageCostCoeffs,
    fit: &ForceLimitFit,
    params: &VehicleParams,
    e_hat: &[f64],
    initial: &State,
) -> Result<HorizonQp> {
    let n = grid.n;
    if n == 0 {
        return Err(Error::Dimension("horizon has no intervals".into()));
    }
    if e_hat.len() != n + 1 {
        return Err(Error::Dimension(format!("need {} linearisation energies, got {}", n + 1, e_hat.len())));
    }
    if let Some(bad) = e_hat.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::domain(format!("linearisation energy must be positive, got {bad}")));
    }
    coeffs.validate()?;
    let layout = Layout { n };
    let mut qp = QpProblem::new(layout.len());
    let ds = grid.ds;
    let m = params.mass;
    let k_e = params.drag_per_energy();
    let c = coeffs.sqrt_coeff();
    let ceg = coeffs.energy_price;
    let [_, p1, p2, p3] = coeffs.power;

    for k in 0..=n {
        qp.var_stage[layout.energy(k)] = k;
        qp.var_stage[layout.accel(k)] = k;
    }
    for k in 0..n {
        qp.var_stage[layout.jerk(k)] = k;
        qp.var_stage[layout.force(k)] = k;
        qp.var_stage[layout.brake(k)] = k;
    }

    // cost
    let mut offset = 0.0;
    for k in 0..n {
        let e = e_hat[k];
        let r = e.powf(-0.5);
        // c E^{-1/2} ≈ c r [1 − ½δ/Ê + ⅜(δ/Ê)²], δ = E − Ê
        qp.add_hessian(layout.energy(k), layout.energy(k), ds * 0.75 * c * r / (e * e));
        qp.linear[layout.energy(k)] += ds * (-1.25 * c * r / e + ceg * 2.0 * p1 / m);
        offset += ds * 1.875 * c * r;
        if coeffs.w1 > 0.0 {
            qp.add_hessian(layout.accel(k), layout.accel(k), 2.0 * ds * coeffs.w1);
        }
        if coeffs.w2 > 0.0 {
            qp.add_hessian(layout.jerk(k), layout.jerk(k), 2.0 * ds * coeffs.w2);
        }
        if p3 > 0.0 {
            qp.add_hessian(layout.force(k), layout.force(k), 2.0 * ds * ceg * p3);
        }
        qp.linear[layout.force(k)] += ds * ceg * p2;
    }
    qp.obj_offset = offset;

    // initial state, dynamics and force definition
    qp.add_eq(&[(layout.energy(0), 1.0)], initial.energy);
    qp.add_eq(&[(layout.accel(0), 1.0)], initial.accel);
    for k in 0..n {
        qp.add_eq(&[(layout.energy(k + 1), 1.0), (layout.energy(k), -1.0), (layout.accel(k), -ds * m)], 0.0);
        qp.add_eq(&[(layout.accel(k + 1), 1.0), (layout.accel(k), -1.0), (layout.jerk(k), -ds)], 0.0);
        qp.add_eq(
            &[(layout.force(k), 1.0), (layout.brake(k), 1.0), (layout.accel(k), -m), (layout.energy(k), -k_e)],
            grid.grade_force[k],
        );
    }

    // boxes
    // node 1 energy is fixed by the initial state; widen its band to contain it
    let e1 = initial.energy + ds * m * initial.accel;
    for k in 1..=n {
        let (lo, hi) = grid.node_band(k);
        let (mut e_lo, mut e_hi) = (0.5 * m * lo * lo, 0.5 * m * hi * hi);
        if k == 1 {
            e_lo = e_lo.min(e1);
            e_hi = e_hi.max(e1);
        }
        qp.add_ineq(&[(layout.energy(k), -1.0)], -e_lo);
        if hi.is_finite() {
            qp.add_ineq(&[(layout.energy(k), 1.0)], e_hi);
        }
        qp.add_ineq(&[(layout.accel(k), -1.0)], -params.accel_min);
        qp.add_ineq(&[(layout.accel(k), 1.0)], params.accel_max);
    }
    let limits = linearized_limits(coeffs.kind, e_hat, fit, grid, params)?;
    for k in 0..n {
        qp.add_ineq(&[(layout.jerk(k), -1.0)], -params.jerk_min);
        qp.add_ineq(&[(layout.jerk(k), 1.0)], params.jerk_max);
        qp.add_ineq(&[(layout.brake(k), -1.0)], -params.brake_force_min);
        qp.add_ineq(&[(layout.brake(k), 1.0)], 0.0);
        for row in &limits[k].force_max {
            // F − c1 E ≤ c0
            qp.add_ineq(&[(layout.force(k), 1.0), (layout.energy(k), -row.c1)], row.c0);
        }
        for row in &limits[k].force_min {
            qp.add_ineq(&[(layout.force(k), -1.0), (layout.energy(k), row.c1)], -row.c0);
        }
    }

    // scaling: unit-order variables, unit-order gradient, unit rows
    let e_ref = e_hat.iter().sum::<f64>() / e_hat.len() as f64;
    let a_ref = params.accel_max.max(-params.accel_min);
    let j_ref = params.jerk_max.max(-params.jerk_min);
    let f_ref = fit.f_max.abs().max(fit.f_min.abs()).max(1.0);
    let b_ref = (-params.brake_force_min).max(1.0);
    let mut d = vec![0.0; layout.len()];
    for k in 0..=n {
        d[layout.energy(k)] = e_ref;
        d[layout.accel(k)] = a_ref;
    }
    for k in 0..n {
        d[layout.jerk(k)] = j_ref;
        d[layout.force(k)] = f_ref;
        d[layout.brake(k)] = b_ref;
    }
    qp.scale_variables(&d);
    let g_ref = qp.linear.iter().fold(0.0_f64, |a, g| a.max(g.abs()));
    let h_ref = qp.hessian.iter().fold(0.0_f64, |a, t| a.max(t.2.abs()));
    let obj_ref = g_ref.max(h_ref);
    if obj_ref > 0.0 {
        qp.scale_objective(obj_ref);
    }
    qp.normalize_rows();
    qp.compress();
    Ok(HorizonQp { problem: qp, layout })
}

#[cfg(test)]
mod tests;
