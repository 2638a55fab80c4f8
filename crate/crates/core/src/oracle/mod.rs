//! Brute-force references used to validate the fast paths: a dense
//! active-set QP solver, dynamic programming over the λ-adjoined horizon
//! problem, finite differences and an a-posteriori feasibility audit.

mod dense;
mod dp;
mod fd;
mod feasibility;

pub use dense::{dense_qp_solve, random_banded_qp, DenseQpSolution};
pub use dp::{dp_solve, DpGrid, DpSolution};
pub use fd::finite_diff_grad;
pub use feasibility::{nlp_feasibility_check, FeasibilityReport, Violation};
