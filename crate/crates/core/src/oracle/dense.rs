//! Primal active-set method on dense matrices.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::qp::QpProblem;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseQpSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

fn dense_hessian(p: &QpProblem) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(p.n, p.n);
    for &(i, j, v) in &p.hessian {
        h[(i, j)] += v;
        if i != j {
            h[(j, i)] += v;
        }
    }
    h
}

fn dense_rows(rows: &crate::qp::SparseRows, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows.rows(), n);
    for r in 0..rows.rows() {
        let (idx, val) = rows.row(r);
        for (j, v) in idx.iter().zip(val) {
            m[(r, *j)] += v;
        }
    }
    m
}

/// Solves a strictly convex QP from a feasible starting point.
///
/// Each step solves the equality-constrained subproblem on the working set
/// with a full KKT factorisation; constraints are added on blocking and the
/// most negative multiplier is dropped on stationarity.
pub fn dense_qp_solve(p: &QpProblem, x0: &[f64], tol: f64) -> Result<DenseQpSolution> {
    p.validate()?;
    let n = p.n;
    if x0.len() != n {
        return Err(Error::Dimension("starting point does not match the problem".into()));
    }
    let h = dense_hessian(p);
    let g = DVector::from_column_slice(&p.linear);
    let a = dense_rows(&p.eq, n);
    let gm = dense_rows(&p.ineq, n);
    let hv = DVector::from_column_slice(&p.ineq_rhs);
    let me = a.nrows();
    let mi = gm.nrows();
    let mut x = DVector::from_column_slice(x0);
    let feas = (&gm * &x - &hv).max();
    let eq_res = (&a * &x - DVector::from_column_slice(&p.eq_rhs)).amax();
    if (mi > 0 && feas > tol) || eq_res > tol {
        return Err(Error::Infeasible("starting point violates the constraints".into()));
    }
    let mut work: Vec<usize> = (0..mi).filter(|&i| (gm.row(i) * &x)[0] >= hv[i] - tol).collect();
    // keep the working set linearly independent by construction: drop rows
    // that would make the KKT matrix singular
    let mut y = DVector::zeros(me);
    let mut z = DVector::zeros(mi);
    for it in 0..(50 * (n + mi) + 100) {
        let w = work.len();
        let k = me + w;
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&h);
        for r in 0..me {
            for c in 0..n {
                kkt[(n + r, c)] = a[(r, c)];
                kkt[(c, n + r)] = a[(r, c)];
            }
        }
        for (r, &i) in work.iter().enumerate() {
            for c in 0..n {
                kkt[(n + me + r, c)] = gm[(i, c)];
                kkt[(c, n + me + r)] = gm[(i, c)];
            }
        }
        let mut rhs = DVector::zeros(n + k);
        let grad = &h * &x + &g;
        rhs.rows_mut(0, n).copy_from(&(-grad));
        let sol = match kkt.clone().lu().solve(&rhs) {
            Some(s) => s,
            None => kkt.svd(true, true).solve(&rhs, 1e-12).map_err(|e| Error::Solver(e.to_string()))?,
        };
        let step = sol.rows(0, n).into_owned();
        let mult = sol.rows(n, k).into_owned();
        if step.amax() <= tol * (1.0 + x.amax()) {
            // multipliers of the working set
            let (neg, idx) = (0..w).fold((0.0, usize::MAX), |(m, at), r| {
                let v = mult[me + r];
                if v < m {
                    (v, r)
                } else {
                    (m, at)
                }
            });
            if idx == usize::MAX || neg >= -tol {
                y.copy_from(&mult.rows(0, me));
                z.fill(0.0);
                for (r, &i) in work.iter().enumerate() {
                    z[i] = mult[me + r].max(0.0);
                }
                let xs: Vec<f64> = x.iter().copied().collect();
                return Ok(DenseQpSolution {
                    objective: p.objective(&xs),
                    x: xs,
                    y: y.iter().copied().collect(),
                    z: z.iter().copied().collect(),
                    iterations: it,
                });
            }
            work.remove(idx);
            continue;
        }
        let mut alpha = 1.0;
        let mut block = None;
        for i in 0..mi {
            if work.contains(&i) {
                continue;
            }
            let gp = (gm.row(i) * &step)[0];
            if gp > 1e-14 {
                let slack = hv[i] - (gm.row(i) * &x)[0];
                let t = slack.max(0.0) / gp;
                if t < alpha {
                    alpha = t;
                    block = Some(i);
                }
            }
        }
        x += alpha * &step;
        if let Some(i) = block {
            work.push(i);
        }
    }
    Err(Error::Solver("active-set iteration limit reached".into()))
}

/// Random strictly convex QP with stage structure and a known feasible
/// point: `stages` stages of three variables, dynamics-like equality rows
/// between neighbouring stages, boxes and one general row per stage.
pub fn random_banded_qp(stages: usize, seed: u64) -> (QpProblem, Vec<f64>) {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let nv = 3;
    let n = stages * nv;
    let mut p = QpProblem::new(n);
    for i in 0..n {
        p.var_stage[i] = i / nv;
    }
    // H = Σ_k b_k b_kᵀ over a window of two stages + 0.1 I
    let mut dense = vec![0.0; n * n];
    for k in 0..stages {
        let lo = k * nv;
        let hi = ((k + 1) * nv).min(n);
        let b: Vec<f64> = (lo..hi).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for (a, i) in (lo..hi).enumerate() {
            for (c, j) in (lo..hi).enumerate() {
                dense[i * n + j] += b[a] * b[c];
            }
        }
    }
    for i in 0..n {
        dense[i * n + i] += 0.1;
        for j in i..n {
            if dense[i * n + j] != 0.0 {
                p.add_hessian(i, j, dense[i * n + j]);
            }
        }
        p.linear[i] = rng.gen_range(-2.0..2.0);
    }
    let x_feas: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
    for k in 0..stages.saturating_sub(1) {
        let (i, j) = (k * nv, (k + 1) * nv);
        let row = [(j, 1.0), (i, -1.0), (i + 1, -rng.gen_range(0.2..1.0))];
        let b: f64 = row.iter().map(|(c, v)| v * x_feas[*c]).sum();
        p.add_eq(&row, b);
    }
    for i in 0..n {
        let lo = x_feas[i] - rng.gen_range(0.05..1.0);
        let hi = x_feas[i] + rng.gen_range(0.05..1.0);
        p.add_ineq(&[(i, -1.0)], -lo);
        p.add_ineq(&[(i, 1.0)], hi);
    }
    for k in 0..stages {
        let row: Vec<(usize, f64)> = (0..nv).map(|c| (k * nv + c, rng.gen_range(-1.0..1.0))).collect();
        let v: f64 = row.iter().map(|(c, w)| w * x_feas[*c]).sum();
        p.add_ineq(&row, v + rng.gen_range(0.0..0.3));
    }
    (p, x_feas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::{solve, QpStatus, SolverOptions};

    #[test]
    fn box_clipped_scalar() {
        let mut p = QpProblem::new(1);
        p.add_hessian(0, 0, 1.0);
        p.linear[0] = -1.0;
        p.add_ineq(&[(0, -1.0)], -2.0);
        p.add_ineq(&[(0, 1.0)], 3.0);
        let s = dense_qp_solve(&p, &[2.5], 1e-12).unwrap();
        assert!((s.x[0] - 2.0).abs() < 1e-12);
        assert!((s.z[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn banded_ipm_matches_dense_reference_at_fifty_stages() {
        let (p, x0) = random_banded_qp(50, 42);
        let reference = dense_qp_solve(&p, &x0, 1e-11).unwrap();
        let ipm = solve(&p, None, &SolverOptions::default()).unwrap();
        assert_eq!(ipm.status, QpStatus::Optimal);
        let rel = (ipm.objective - reference.objective).abs() / reference.objective.abs().max(1.0);
        assert!(rel <= 1e-7, "relative objective gap {rel}");
    }
}
