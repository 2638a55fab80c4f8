//! Mehrotra predictor–corrector interior-point method.
//!
//! Each Newton system is reduced to the quasi-definite form
//! `[[H + GᵀWG + ρI, Aᵀ], [A, −δI]]`, permuted so that every variable and
//! every equality row sits next to its stage, and factorised as a banded
//! LDLᵀ. The bandwidth is set by the stage coupling, so one factorisation
//! costs O(N).

use log::trace;

use super::banded::BandedLdl;
use super::{kkt_residuals, KktResiduals, QpProblem, QpSolution, QpStatus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Primal (ρ) and dual (δ) regularisation of the reduced system.
    pub regularization: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100, regularization: 1e-10 }
    }
}

/// Previous primal/dual point used to seed the iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WarmStart {
    pub x: Vec<f64>,
    pub y: Option<Vec<f64>>,
    pub z: Option<Vec<f64>>,
}

/// Fraction of the cold-start point blended into a warm start so the seed
/// stays strictly interior.
const WARM_BLEND: f64 = 0.99;
const STEP_FRACTION: f64 = 0.99;
/// Iterations without a better residual before giving up.
const STALL_ITERATIONS: usize = 10;

struct Kkt<'a> {
    qp: &'a QpProblem,
    pos_var: Vec<usize>,
    pos_eq: Vec<usize>,
    positive: Vec<bool>,
    ldl: BandedLdl,
    reg: f64,
}

impl<'a> Kkt<'a> {
    fn new(qp: &'a QpProblem, reg: f64) -> Self {
        let n = qp.n;
        let p = qp.eq.rows();
        // (stage, kind, index) keys: variables first within a stage, then the
        // equality rows whose latest variable belongs to that stage
        let mut keys: Vec<(usize, u8, usize)> = (0..n).map(|i| (qp.var_stage[i], 0, i)).collect();
        for r in 0..p {
            let (idx, _) = qp.eq.row(r);
            let stage = idx.iter().map(|&j| qp.var_stage[j]).max().unwrap_or(0);
            keys.push((stage, 1, r));
        }
        keys.sort_unstable();
        let mut pos_var = vec![0; n];
        let mut pos_eq = vec![0; p];
        let mut positive = vec![false; n + p];
        for (pos, &(_, kind, i)) in keys.iter().enumerate() {
            if kind == 0 {
                pos_var[i] = pos;
                positive[pos] = true;
            } else {
                pos_eq[i] = pos;
            }
        }
        let mut bw = 0;
        let mut widen = |a: usize, b: usize| bw = bw.max(a.abs_diff(b));
        for &(i, j, _) in &qp.hessian {
            widen(pos_var[i], pos_var[j]);
        }
        for r in 0..qp.ineq.rows() {
            let (idx, _) = qp.ineq.row(r);
            let lo = idx.iter().map(|&j| pos_var[j]).min().unwrap_or(0);
            let hi = idx.iter().map(|&j| pos_var[j]).max().unwrap_or(0);
            widen(lo, hi);
        }
        for r in 0..p {
            let (idx, _) = qp.eq.row(r);
            for &j in idx {
                widen(pos_eq[r], pos_var[j]);
            }
        }
        Self { qp, pos_var, pos_eq, positive, ldl: BandedLdl::new(n + p, bw), reg }
    }

    fn factor(&mut self, w: &[f64]) {
        let qp = self.qp;
        self.ldl.clear();
        for &(i, j, v) in &qp.hessian {
            self.ldl.add(self.pos_var[i], self.pos_var[j], v);
        }
        for i in 0..qp.n {
            self.ldl.add(self.pos_var[i], self.pos_var[i], self.reg);
        }
        for r in 0..qp.ineq.rows() {
            let (idx, val) = qp.ineq.row(r);
            for a in 0..idx.len() {
                for b in a..idx.len() {
                    self.ldl.add(self.pos_var[idx[a]], self.pos_var[idx[b]], w[r] * val[a] * val[b]);
                }
            }
        }
        for r in 0..qp.eq.rows() {
            let (idx, val) = qp.eq.row(r);
            for (j, v) in idx.iter().zip(val) {
                self.ldl.add(self.pos_eq[r], self.pos_var[*j], *v);
            }
            self.ldl.add(self.pos_eq[r], self.pos_eq[r], -self.reg);
        }
        self.ldl.factor(&self.positive, 1e-3 * self.reg);
    }

    /// Unregularised product `[(H + GᵀWG) dx + Aᵀ dy; A dx]`.
    fn apply(&self, w: &[f64], dx: &[f64], dy: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let qp = self.qp;
        let mut top = qp.hess_mul(dx);
        let mut gdx = qp.ineq.mul(dx);
        for (g, wi) in gdx.iter_mut().zip(w) {
            *g *= wi;
        }
        qp.ineq.mul_t_add(&gdx, &mut top);
        qp.eq.mul_t_add(dy, &mut top);
        (top, qp.eq.mul(dx))
    }

    fn solve(&self, w: &[f64], r1: &[f64], r2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (n, p) = (self.qp.n, self.qp.eq.rows());
        let mut dx = vec![0.0; n];
        let mut dy = vec![0.0; p];
        let mut res1 = r1.to_vec();
        let mut res2 = r2.to_vec();
        let scale = r1.iter().chain(r2).fold(0.0_f64, |a, v| a.max(v.abs())).max(1e-300);
        for _ in 0..6 {
            let mut buf = vec![0.0; n + p];
            for i in 0..n {
                buf[self.pos_var[i]] = res1[i];
            }
            for r in 0..p {
                buf[self.pos_eq[r]] = res2[r];
            }
            self.ldl.solve(&mut buf);
            for i in 0..n {
                dx[i] += buf[self.pos_var[i]];
            }
            for r in 0..p {
                dy[r] += buf[self.pos_eq[r]];
            }
            let (k1, k2) = self.apply(w, &dx, &dy);
            let mut err: f64 = 0.0;
            for i in 0..n {
                res1[i] = r1[i] - k1[i];
                err = err.max(res1[i].abs());
            }
            for r in 0..p {
                res2[r] = r2[r] - k2[r];
                err = err.max(res2[r].abs());
            }
            if err <= 1e-13 * scale {
                break;
            }
        }
        (dx, dy)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, b| a.max(b.abs()))
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    let mut a = f64::INFINITY;
    for (x, d) in v.iter().zip(dv) {
        if *d < 0.0 {
            a = a.min(-x / d);
        }
    }
    a
}

/// Solves the QP. Infeasibility and the iteration cap are reported through
/// [`QpStatus`]; malformed problems are errors.
pub fn solve(qp: &QpProblem, warm: Option<&WarmStart>, opts: &SolverOptions) -> Result<QpSolution> {
    qp.validate()?;
    let (n, p, m) = (qp.n, qp.eq.rows(), qp.ineq.rows());
    if let Some(ws) = warm {
        if ws.x.len() != n || ws.y.as_ref().is_some_and(|y| y.len() != p) || ws.z.as_ref().is_some_and(|z| z.len() != m)
        {
            return Err(Error::Dimension("warm start does not match the problem".into()));
        }
    }
    let mut kkt = Kkt::new(qp, opts.regularization);
    let h = &qp.ineq_rhs;

    // cold start: least-squares point of the system with W = I
    let ones = vec![1.0; m];
    kkt.factor(&ones);
    let mut r1: Vec<f64> = qp.linear.iter().map(|g| -g).collect();
    qp.ineq.mul_t_add(h, &mut r1);
    let (mut x, mut y) = kkt.solve(&ones, &r1, &qp.eq_rhs);
    let gx = qp.ineq.mul(&x);
    let mut s: Vec<f64> = (0..m).map(|i| h[i] - gx[i]).collect();
    let mut z: Vec<f64> = s.iter().map(|v| -v).collect();
    let shift = |v: &mut Vec<f64>| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        if lo <= 0.0 {
            v.iter_mut().for_each(|x| *x += 1.0 - lo);
        }
    };
    shift(&mut s);
    shift(&mut z);

    if let Some(ws) = warm {
        let gx = qp.ineq.mul(&ws.x);
        for i in 0..m {
            let sw = (h[i] - gx[i]).max(0.0);
            s[i] = WARM_BLEND * sw + (1.0 - WARM_BLEND) * s[i];
            if let Some(zw) = &ws.z {
                z[i] = WARM_BLEND * zw[i].max(0.0) + (1.0 - WARM_BLEND) * z[i];
            }
        }
        x = ws.x.clone();
        if let Some(yw) = &ws.y {
            y = yw.clone();
        }
    }

    let f_dual = inf_norm(&qp.linear).max(1.0);
    let f_eq = inf_norm(&qp.eq_rhs).max(1.0);
    let f_ineq = inf_norm(h).max(1.0);

    let mut status = QpStatus::MaxIter;
    let mut iterations = 0;
    // best iterate by normalised residual, returned when the loop stalls
    let mut best = (f64::INFINITY, 0, x.clone(), y.clone(), z.clone(), KktResiduals::default());
    for it in 0..=opts.max_iter {
        iterations = it;
        let hx = qp.hess_mul(&x);
        let mut rd: Vec<f64> = (0..n).map(|i| hx[i] + qp.linear[i]).collect();
        qp.eq.mul_t_add(&y, &mut rd);
        qp.ineq.mul_t_add(&z, &mut rd);
        let ax = qp.eq.mul(&x);
        let rp: Vec<f64> = (0..p).map(|r| ax[r] - qp.eq_rhs[r]).collect();
        let gx = qp.ineq.mul(&x);
        let ri: Vec<f64> = (0..m).map(|i| gx[i] + s[i] - h[i]).collect();
        let mu = if m > 0 { s.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() / m as f64 } else { 0.0 };

        let obj: f64 = (0..n).map(|i| 0.5 * x[i] * hx[i] + qp.linear[i] * x[i]).sum();
        let raw = KktResiduals {
            stationarity: inf_norm(&rd),
            primal_eq: inf_norm(&rp),
            primal_ineq: (0..m).fold(0.0, |a, i| a.max(gx[i] - h[i])),
            complementarity: (0..m).map(|i| (z[i] * (gx[i] - h[i])).abs()).sum(),
        };
        let f_comp = obj.abs().max(1.0);
        trace!(
            "ipm it={it} mu={mu:.3e} rd={:.3e} rp={:.3e} ri={:.3e} rc={:.3e}",
            raw.stationarity,
            raw.primal_eq,
            raw.primal_ineq,
            raw.complementarity
        );
        let merit = (raw.stationarity / f_dual)
            .max(raw.primal_eq / f_eq)
            .max(inf_norm(&ri) / f_ineq)
            .max(raw.complementarity / f_comp);
        if merit < best.0 {
            best = (merit, it, x.clone(), y.clone(), z.clone(), raw);
        }
        if merit <= opts.tol && raw.primal_ineq <= opts.tol * f_ineq {
            best = (merit, it, x.clone(), y.clone(), z.clone(), raw);
            status = QpStatus::Optimal;
            break;
        }
        if it == opts.max_iter || it >= best.1 + STALL_ITERATIONS {
            break;
        }
        // normalised Farkas certificate: Aᵀy + Gᵀz ≈ 0 with bᵀy + hᵀz < 0
        let dual_size = inf_norm(&y).max(inf_norm(&z));
        if dual_size > 1e8 * f_dual {
            let mut cert = vec![0.0; n];
            qp.eq.mul_t_add(&y, &mut cert);
            qp.ineq.mul_t_add(&z, &mut cert);
            let lin: f64 = (0..p).map(|r| qp.eq_rhs[r] * y[r]).sum::<f64>() + (0..m).map(|i| h[i] * z[i]).sum::<f64>();
            if inf_norm(&cert) <= 1e-6 * dual_size && lin < -1e-6 * dual_size {
                status = QpStatus::Infeasible;
                break;
            }
        }

        let w: Vec<f64> = (0..m).map(|i| z[i] / s[i]).collect();
        kkt.factor(&w);
        let direction = |rc: &[f64]| {
            let t: Vec<f64> = (0..m).map(|i| (rc[i] + z[i] * ri[i]) / s[i]).collect();
            let mut r1: Vec<f64> = rd.iter().map(|v| -v).collect();
            let mut gt = vec![0.0; n];
            qp.ineq.mul_t_add(&t, &mut gt);
            for i in 0..n {
                r1[i] -= gt[i];
            }
            let r2: Vec<f64> = rp.iter().map(|v| -v).collect();
            let (dx, dy) = kkt.solve(&w, &r1, &r2);
            let gdx = qp.ineq.mul(&dx);
            let dz: Vec<f64> = (0..m).map(|i| (rc[i] + z[i] * (ri[i] + gdx[i])) / s[i]).collect();
            let ds: Vec<f64> = (0..m).map(|i| -ri[i] - gdx[i]).collect();
            (dx, dy, dz, ds)
        };

        let rc_aff: Vec<f64> = (0..m).map(|i| -s[i] * z[i]).collect();
        let (_, _, dz_a, ds_a) = direction(&rc_aff);
        let a_aff = max_step(&s, &ds_a).min(max_step(&z, &dz_a)).min(1.0);
        let sigma = if m > 0 {
            let mu_aff = (0..m).map(|i| (s[i] + a_aff * ds_a[i]) * (z[i] + a_aff * dz_a[i])).sum::<f64>() / m as f64;
            (mu_aff / mu).clamp(0.0, 1.0).powi(3)
        } else {
            0.0
        };
        let rc: Vec<f64> = (0..m).map(|i| -s[i] * z[i] - ds_a[i] * dz_a[i] + sigma * mu).collect();
        let (dx, dy, dz, ds) = direction(&rc);
        let alpha = (STEP_FRACTION * max_step(&s, &ds).min(max_step(&z, &dz))).min(1.0);
        for i in 0..n {
            x[i] += alpha * dx[i];
        }
        for r in 0..p {
            y[r] += alpha * dy[r];
        }
        for i in 0..m {
            s[i] += alpha * ds[i];
            z[i] += alpha * dz[i];
        }
    }

    let (_, _, x, y, z, raw) = best;
    let objective = qp.objective(&x);
    let f_comp = objective.abs().max(1.0);
    let residuals = KktResiduals {
        stationarity: raw.stationarity / f_dual,
        primal_eq: raw.primal_eq / f_eq,
        primal_ineq: raw.primal_ineq / f_ineq,
        complementarity: raw.complementarity / f_comp,
    };
    debug_assert!(kkt_residuals(qp, &x, &y, &z).is_ok());
    Ok(QpSolution { x, y, z, objective, status, iterations, residuals })
}
