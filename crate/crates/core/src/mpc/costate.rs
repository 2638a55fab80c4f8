//! Travel-time costate estimate, one damped Newton step per update.
//!
//! `f(λ) = t*(λ) − t_H` decreases in λ. The step uses the most recent secant
//! taken over a meaningful change in λ, floored by the chord slope
//! `f'_max = (f_min − f_max)/(λ_max − λ_min)`. Secants over tiny steps are
//! dominated by the update-to-update drift of `f` and are not trusted.
//!
//! On a sigmoid-shaped `f` a shallow slope can throw a step clean across the
//! root onto a plateau. The last sign change is therefore kept as a bracket;
//! a Newton step leaving it is replaced by an Illinois false-position step.
//! Bracket ends expire after a few updates, since `f` moves with the horizon
//! and with the time budget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative λ change below which a secant is ignored.
const SECANT_MIN_STEP: f64 = 0.01;
/// Updates after which an unrefreshed bracket end is dropped.
const BRACKET_MEMORY: usize = 8;

/// One evaluation kept as a bracket end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Probe {
    lambda: f64,
    f: f64,
    age: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostateEstimator {
    pub lambda: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Chord slope through `(λ_min, f_max)` and `(λ_max, f_min)`, negative.
    pub slope_max: f64,
    /// Last `(λ, f)` evaluation.
    prev: Option<(f64, f64)>,
    /// Last trusted secant slope.
    slope: f64,
    /// Latest evaluations with `f > 0` and `f ≤ 0`.
    lo: Option<Probe>,
    hi: Option<Probe>,
    /// Side of the last evaluation, for the Illinois halving.
    side: i8,
    /// `f < 0` already at `λ_min`: the budget never binds and λ stays 0.
    pub pinned: bool,
    pub frozen: bool,
}

impl CostateEstimator {
    /// Warm start on the chord: `λ(0) = λ_min − f_max / f'_max`.
    pub fn warm_start(lambda_max: f64, f_max: f64, f_min: f64) -> Result<Self> {
        if !(lambda_max > 0.0) {
            return Err(Error::InvalidParams(format!("lambda_max must be positive, got {lambda_max}")));
        }
        if f_max < 0.0 {
            return Ok(Self {
                lambda: 0.0,
                lambda_min: 0.0,
                lambda_max,
                slope_max: -1.0,
                prev: None,
                slope: -1.0,
                lo: None,
                hi: None,
                side: 0,
                pinned: true,
                frozen: false,
            });
        }
        let slope = (f_min - f_max) / lambda_max;
        if !(slope < 0.0) {
            return Err(Error::InvalidParams(format!(
                "travel time must drop between lambda = 0 and lambda_max (f: {f_max} -> {f_min})"
            )));
        }
        let mut est = Self::with_slope((-f_max / slope).clamp(0.0, lambda_max), lambda_max, slope)?;
        est.lo = Some(Probe { lambda: 0.0, f: f_max, age: 0 });
        est.hi = Some(Probe { lambda: lambda_max, f: f_min, age: 0 });
        Ok(est)
    }

    /// Estimator at `lambda` with a given slope floor.
    pub fn with_slope(lambda: f64, lambda_max: f64, slope_max: f64) -> Result<Self> {
        if !(slope_max < 0.0) || !(0.0..=lambda_max).contains(&lambda) {
            return Err(Error::InvalidParams("need a negative slope and lambda in [0, lambda_max]".into()));
        }
        Ok(Self {
            lambda,
            lambda_min: 0.0,
            lambda_max,
            slope_max,
            prev: None,
            slope: slope_max,
            lo: None,
            hi: None,
            side: 0,
            pinned: false,
            frozen: false,
        })
    }

    /// One step from `f = f(λ_t)` evaluated at the current estimate.
    pub fn update(&mut self, f: f64) -> f64 {
        if self.pinned || self.frozen {
            return self.lambda;
        }
        let lambda = self.lambda;
        if let Some((lp, fp)) = self.prev {
            let step = lambda - lp;
            let secant = (f - fp) / step;
            if step.abs() > SECANT_MIN_STEP * lambda.abs().max(lp.abs()) && secant < 0.0 {
                self.slope = secant;
            }
        }
        let slope = self.slope.min(self.slope_max);
        self.prev = Some((lambda, f));
        self.track(lambda, f);
        let mut next = lambda - f / slope;
        if let (Some(lo), Some(hi)) = (self.lo, self.hi) {
            let (a, b) = (lo.lambda.min(hi.lambda), lo.lambda.max(hi.lambda));
            if !(a < next && next < b) {
                next = lo.lambda - lo.f * (hi.lambda - lo.lambda) / (hi.f - lo.f);
            }
        }
        self.lambda = next.clamp(self.lambda_min, self.lambda_max);
        self.lambda
    }

    fn track(&mut self, lambda: f64, f: f64) {
        for end in [&mut self.lo, &mut self.hi] {
            if let Some(p) = end {
                p.age += 1;
                if p.age > BRACKET_MEMORY {
                    *end = None;
                }
            }
        }
        let probe = Some(Probe { lambda, f, age: 0 });
        let side = if f > 0.0 { 1 } else { -1 };
        // same side twice: halve the stale end's value (Illinois)
        if side == self.side {
            let other = if side > 0 { &mut self.hi } else { &mut self.lo };
            if let Some(p) = other {
                p.f *= 0.5;
            }
        }
        self.side = side;
        if side > 0 {
            self.lo = probe;
            // f decreases in λ; an end on the wrong side is out of date
            if self.hi.is_some_and(|h| h.lambda <= lambda) {
                self.hi = None;
            }
        } else {
            self.hi = probe;
            if self.lo.is_some_and(|l| l.lambda >= lambda) {
                self.lo = None;
            }
        }
    }
}
