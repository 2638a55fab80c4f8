//! Energy-optimal speed planning for heavy vehicles over long look-ahead horizons.

// `!(x > 0.0)` rejects NaN on purpose; index loops mirror the stage algebra
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod model;
pub mod mpc;
pub mod ocp;
pub mod oracle;
pub mod powertrain;
pub mod qp;

pub use error::{Error, Result};
