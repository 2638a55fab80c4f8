//! Convex QP with stage-banded structure and its interior-point solver.
//!
//! ```text
//! min ½ xᵀ H x + gᵀ x   s.t.   A x = b,   G x ≤ h
//! ```

mod banded;
mod ipm;

pub use banded::BandedLdl;
pub use ipm::{solve, SolverOptions, WarmStart};

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};

/// Compressed sparse rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseRows {
    pub ptr: Vec<usize>,
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl SparseRows {
    pub fn new() -> Self {
        Self { ptr: vec![0], idx: Vec::new(), val: Vec::new() }
    }

    pub fn push_row(&mut self, entries: &[(usize, f64)]) {
        for &(j, v) in entries {
            if v != 0.0 {
                self.idx.push(j);
                self.val.push(v);
            }
        }
        self.ptr.push(self.idx.len());
    }

    pub fn rows(&self) -> usize {
        self.ptr.len() - 1
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.ptr[i]..self.ptr[i + 1];
        (&self.idx[r.clone()], &self.val[r])
    }

    pub fn dot_row(&self, i: usize, x: &[f64]) -> f64 {
        let (idx, val) = self.row(i);
        idx.iter().zip(val).map(|(j, v)| v * x[*j]).sum()
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows()).map(|i| self.dot_row(i, x)).collect()
    }

    /// `out += Mᵀ y`.
    pub fn mul_t_add(&self, y: &[f64], out: &mut [f64]) {
        for i in 0..self.rows() {
            let (idx, val) = self.row(i);
            for (j, v) in idx.iter().zip(val) {
                out[*j] += v * y[i];
            }
        }
    }

    fn scale_columns(&mut self, d: &[f64]) {
        for (j, v) in self.idx.iter().zip(self.val.iter_mut()) {
            *v *= d[*j];
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub n: usize,
    /// Upper-triangle triplets `(i, j, v)` with `i ≤ j`.
    pub hessian: Vec<(usize, usize, f64)>,
    pub linear: Vec<f64>,
    pub eq: SparseRows,
    pub eq_rhs: Vec<f64>,
    pub ineq: SparseRows,
    pub ineq_rhs: Vec<f64>,
    /// Stage of every variable; rows inherit the latest stage they touch.
    pub var_stage: Vec<usize>,
    /// Physical value of variable `i` is `scale[i] · x[i]`.
    pub scale: Vec<f64>,
    /// Physical objective is `obj_scale · (½ xᵀHx + gᵀx) + obj_offset`.
    pub obj_scale: f64,
    pub obj_offset: f64,
}

impl QpProblem {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            hessian: Vec::new(),
            linear: vec![0.0; n],
            eq: SparseRows::new(),
            eq_rhs: Vec::new(),
            ineq: SparseRows::new(),
            ineq_rhs: Vec::new(),
            var_stage: vec![0; n],
            scale: vec![1.0; n],
            obj_scale: 1.0,
            obj_offset: 0.0,
        }
    }

    pub fn add_hessian(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.hessian.push((i, j, v));
    }

    pub fn add_eq(&mut self, entries: &[(usize, f64)], rhs: f64) {
        self.eq.push_row(entries);
        self.eq_rhs.push(rhs);
    }

    pub fn add_ineq(&mut self, entries: &[(usize, f64)], rhs: f64) {
        self.ineq.push_row(entries);
        self.ineq_rhs.push(rhs);
    }

    /// Merges duplicate Hessian triplets and sorts them.
    pub fn compress(&mut self) {
        self.hessian.sort_by_key(|a| (a.0, a.1));
        let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(self.hessian.len());
        for &(i, j, v) in &self.hessian {
            match out.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => out.push((i, j, v)),
            }
        }
        self.hessian = out;
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if self.linear.len() != n || self.var_stage.len() != n || self.scale.len() != n {
            return Err(Error::Dimension("per-variable vectors must have length n".into()));
        }
        if self.eq.rows() != self.eq_rhs.len() || self.ineq.rows() != self.ineq_rhs.len() {
            return Err(Error::Dimension("constraint rows and right-hand sides differ".into()));
        }
        if self.hessian.iter().any(|&(i, j, v)| i > j || j >= n || !v.is_finite())
            || self.eq.idx.iter().chain(&self.ineq.idx).any(|&j| j >= n)
        {
            return Err(Error::Dimension("index out of range or non-finite Hessian".into()));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !(finite(&self.linear)
            && finite(&self.eq.val)
            && finite(&self.ineq.val)
            && finite(&self.eq_rhs)
            && finite(&self.ineq_rhs))
        {
            return Err(Error::Dimension("problem data must be finite".into()));
        }
        Ok(())
    }

    /// `out = H x`.
    pub fn hess_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for &(i, j, v) in &self.hessian {
            out[i] += v * x[j];
            if i != j {
                out[j] += v * x[i];
            }
        }
        out
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let hx = self.hess_mul(x);
        (0..self.n).map(|i| 0.5 * x[i] * hx[i] + self.linear[i] * x[i]).sum()
    }

    /// Objective in physical units.
    pub fn physical_objective(&self, x: &[f64]) -> f64 {
        self.obj_scale * self.objective(x) + self.obj_offset
    }

    /// Rescales variables so that `x_new = x_old / d`, composing with the
    /// existing scale.
    pub fn scale_variables(&mut self, d: &[f64]) {
        for t in self.hessian.iter_mut() {
            t.2 *= d[t.0] * d[t.1];
        }
        for i in 0..self.n {
            self.linear[i] *= d[i];
            self.scale[i] *= d[i];
        }
        self.eq.scale_columns(d);
        self.ineq.scale_columns(d);
    }

    /// Divides the objective by `c`.
    pub fn scale_objective(&mut self, c: f64) {
        for t in self.hessian.iter_mut() {
            t.2 /= c;
        }
        self.linear.iter_mut().for_each(|g| *g /= c);
        self.obj_scale *= c;
    }

    /// Normalises every constraint row to unit ∞-norm.
    pub fn normalize_rows(&mut self) {
        fn norm(rows: &mut SparseRows, rhs: &mut [f64]) {
            for i in 0..rows.rows() {
                let r = rows.ptr[i]..rows.ptr[i + 1];
                let m = rows.val[r.clone()].iter().fold(0.0_f64, |a, v| a.max(v.abs()));
                if m > 0.0 {
                    rows.val[r].iter_mut().for_each(|v| *v /= m);
                    rhs[i] /= m;
                }
            }
        }
        norm(&mut self.eq, &mut self.eq_rhs);
        norm(&mut self.ineq, &mut self.ineq_rhs);
    }

    pub fn to_physical(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.scale).map(|(v, s)| v * s).collect()
    }

    pub fn from_physical(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.scale).map(|(v, s)| v / s).collect()
    }

    /// Plain-text triplet listing in a fixed order.
    pub fn dump<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# qp n={} eq={} ineq={}", self.n, self.eq.rows(), self.ineq.rows())?;
        writeln!(out, "# obj_scale={:e} obj_offset={:e}", self.obj_scale, self.obj_offset)?;
        for &(i, j, v) in &self.hessian {
            writeln!(out, "H {i} {j} {v:e}")?;
        }
        for (i, v) in self.linear.iter().enumerate() {
            writeln!(out, "g {i} {v:e}")?;
        }
        for (name, rows, rhs) in [("A", &self.eq, &self.eq_rhs), ("G", &self.ineq, &self.ineq_rhs)] {
            for r in 0..rows.rows() {
                let (idx, val) = rows.row(r);
                for (j, v) in idx.iter().zip(val) {
                    writeln!(out, "{name} {r} {j} {v:e}")?;
                }
                writeln!(out, "{} {r} {:e}", if name == "A" { "b" } else { "h" }, rhs[r])?;
            }
        }
        for (i, s) in self.scale.iter().enumerate() {
            writeln!(out, "scale {i} {s:e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Optimal,
    /// Iteration cap reached or progress stalled; the best iterate is returned.
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktResiduals {
    /// ‖Hx + g + Aᵀy + Gᵀz‖∞
    pub stationarity: f64,
    /// ‖Ax − b‖∞
    pub primal_eq: f64,
    /// ‖(Gx − h)₊‖∞
    pub primal_ineq: f64,
    /// Duality gap ‖z ∘ (Gx − h)‖₁, which bounds the objective error.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal_eq).max(self.primal_ineq).max(self.complementarity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Equality multipliers.
    pub y: Vec<f64>,
    /// Inequality multipliers, nonnegative.
    pub z: Vec<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub iterations: usize,
    /// Residuals relative to `max(1, ‖data‖∞)` of the matching term:
    /// ‖g‖ for stationarity, ‖b‖, ‖h‖ and |objective| for the others.
    pub residuals: KktResiduals,
}

/// Absolute KKT residuals of `(x, y, z)`.
pub fn kkt_residuals(problem: &QpProblem, x: &[f64], y: &[f64], z: &[f64]) -> Result<KktResiduals> {
    if x.len() != problem.n || y.len() != problem.eq.rows() || z.len() != problem.ineq.rows() {
        return Err(Error::Dimension("point does not match the problem".into()));
    }
    let mut r = problem.hess_mul(x);
    for i in 0..problem.n {
        r[i] += problem.linear[i];
    }
    problem.eq.mul_t_add(y, &mut r);
    problem.ineq.mul_t_add(z, &mut r);
    let amax = |v: &mut dyn Iterator<Item = f64>| v.fold(0.0_f64, |a, b| a.max(b.abs()));
    let eq = problem.eq.mul(x);
    let gx = problem.ineq.mul(x);
    Ok(KktResiduals {
        stationarity: amax(&mut r.into_iter()),
        primal_eq: amax(&mut eq.iter().zip(&problem.eq_rhs).map(|(a, b)| a - b)),
        primal_ineq: amax(&mut gx.iter().zip(&problem.ineq_rhs).map(|(a, b)| (a - b).max(0.0))),
        complementarity: gx.iter().zip(&problem.ineq_rhs).zip(z).map(|((a, b), zi)| (zi * (a - b)).abs()).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationarity_reduces_to_gradient_with_zero_duals() {
        let mut p = QpProblem::new(2);
        p.add_hessian(0, 0, 2.0);
        p.add_hessian(0, 1, 0.5);
        p.add_hessian(1, 1, 1.0);
        p.linear = vec![1.0, -3.0];
        p.add_ineq(&[(0, 1.0)], 10.0);
        p.add_eq(&[(0, 1.0), (1, 1.0)], 1.0);
        let x = [0.3, 0.7];
        let r = kkt_residuals(&p, &x, &[0.0], &[0.0]).unwrap();
        let hx0: f64 = 2.0 * 0.3 + 0.5 * 0.7 + 1.0;
        let hx1: f64 = 0.5 * 0.3 + 0.7 - 3.0;
        assert!((r.stationarity - hx0.abs().max(hx1.abs())).abs() < 1e-15);
        assert_eq!(r.complementarity, 0.0);
    }

    #[test]
    fn scaling_preserves_physical_objective() {
        let mut p = QpProblem::new(2);
        p.add_hessian(0, 0, 4.0);
        p.add_hessian(1, 1, 1.0);
        p.linear = vec![1.0, 2.0];
        let x = [3.0, -1.0];
        let before = p.physical_objective(&x);
        p.scale_variables(&[10.0, 0.1]);
        p.scale_objective(7.0);
        let xs = p.from_physical(&x);
        assert!((p.physical_objective(&xs) - before).abs() < 1e-12);
    }

    #[test]
    fn dump_is_deterministic() {
        let mut p = QpProblem::new(1);
        p.add_hessian(0, 0, 1.0);
        p.add_ineq(&[(0, 1.0)], 2.0);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        p.dump(&mut a).unwrap();
        p.dump(&mut b).unwrap();
        assert_eq!(a, b);
        assert!(String::from_utf8(a).unwrap().contains("G 0 0 1e0"));
    }
}
