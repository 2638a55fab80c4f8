//! Property tests of the model, powertrain surrogates, QP assembly and solver.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ecodrive::model::{
    accel_limits, kinetic_energy, speed_of, time_slope, RoadProfile, RoadSample, State, SyntheticRoute, TractionLimits,
    VehicleParams,
};
use ecodrive::mpc::simulate_step;
use ecodrive::ocp::{assemble_qp, fuel_price_per_joule, linearized_limits, HorizonGrid, StageCostCoeffs};
use ecodrive::oracle::random_banded_qp;
use ecodrive::powertrain::{GridSpec, Powertrain, PowertrainConfig, PowertrainKind};
use ecodrive::qp::{solve, SolverOptions};

fn cv() -> &'static (VehicleParams, Powertrain) {
    static CV: OnceLock<(VehicleParams, Powertrain)> = OnceLock::new();
    CV.get_or_init(|| {
        let params = VehicleParams::heavy_truck();
        let pt = Powertrain::synthesize(PowertrainKind::Cv, &params, &PowertrainConfig::for_kind(PowertrainKind::Cv))
            .unwrap();
        (params, pt)
    })
}

fn hilly() -> &'static RoadProfile {
    static ROUTE: OnceLock<RoadProfile> = OnceLock::new();
    ROUTE.get_or_init(|| {
        RoadProfile::synthetic(&SyntheticRoute { length: 20_000.0, ..SyntheticRoute::default() }).unwrap()
    })
}

struct Band(f64, f64);

impl TractionLimits for Band {
    fn force_max(&self, _: f64) -> f64 {
        self.1
    }
    fn force_min(&self, _: f64) -> f64 {
        self.0
    }
}

proptest! {
    #[test]
    fn speed_energy_round_trip(v in 1.0f64..50.0) {
        let p = VehicleParams::heavy_truck();
        let back = speed_of(kinetic_energy(v, &p).unwrap(), &p).unwrap();
        prop_assert!((back - v).abs() <= 1e-12 * v);
    }

    #[test]
    fn time_slope_decreasing_and_convex(e in 1e5f64..5e7, rel in 1e-3f64..0.2) {
        let p = VehicleParams::heavy_truck();
        let h = rel * e;
        let (lo, mid, hi) = (time_slope(e - 0.5 * h, &p).unwrap(), time_slope(e, &p).unwrap(), time_slope(e + 0.5 * h, &p).unwrap());
        prop_assert!(lo > mid && mid > hi);
        prop_assert!(lo + hi - 2.0 * mid >= 0.0);
    }

    #[test]
    fn accel_band_within_comfort_bounds(
        e in 1e5f64..2e7,
        grade in -5e4f64..5e4,
        f_lo in -4e5f64..0.0,
        f_hi in 0.0f64..4e5,
    ) {
        let p = VehicleParams::heavy_truck();
        let a = accel_limits(e, grade, &Band(f_lo, f_hi), &p);
        prop_assert!(a.max <= p.accel_max);
        prop_assert!(a.min >= p.accel_min);
    }

    #[test]
    fn constant_speed_travel_time(v in 10.0f64..30.0, ds in 10.0f64..300.0, length in 1_000.0f64..20_000.0) {
        let p = VehicleParams::heavy_truck();
        let n = (length / ds).ceil() as usize;
        let ds = length / n as f64;
        let mut state = State { t: 0.0, energy: kinetic_energy(v, &p).unwrap(), accel: 0.0 };
        let band = Band(-1e6, 1e6);
        for _ in 0..n {
            state = simulate_step(&state, 0.0, 0.0, 0.0, ds, &p, &band, PowertrainKind::Cv).unwrap().0;
        }
        prop_assert!((state.t - length / v).abs() <= 1e-4 * length / v);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn surrogate_signs_hold_across_ratings(rated in 250e3f64..450e3, ev in any::<bool>()) {
        let kind = if ev { PowertrainKind::Ev } else { PowertrainKind::Cv };
        let params = if ev { VehicleParams::electric_truck() } else { VehicleParams::heavy_truck() };
        let cfg = PowertrainConfig {
            rated_power: rated,
            grid: GridSpec { n_energy: 60, n_force: 60, v_min: 1.0 },
            ..PowertrainConfig::for_kind(kind)
        };
        let pt = Powertrain::synthesize(kind, &params, &cfg).unwrap();
        prop_assert!(pt.power.coeffs.iter().all(|c| *c >= 0.0), "{:?}", pt.power.coeffs);
        prop_assert!(pt.limits.y1 >= 0.0 && pt.limits.x1 <= 0.0);
        if ev {
            let v = 70.0 / 3.6;
            let f = pt.limits.force_min_at_speed(v);
            let map = pt.gear_map.as_ref().unwrap();
            let regen = map.power.iter().zip(&map.gear).filter(|(_, g)| **g != 0).any(|(p, _)| p.is_some_and(|p| p < 0.0));
            prop_assert!(f < 0.0 && regen);
        }
    }

    #[test]
    fn qp_hessian_psd_above_energy_floor(seed in any::<u64>(), lambda in 0.0f64..0.05, w1 in 0.0f64..5.0, w2 in 0.0f64..1e4) {
        let (params, pt) = cv();
        let grid = HorizonGrid::on_route(hilly(), params, 2_000.0, 6_000.0, 300.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let floor = params.energy_floor(grid.v_min.iter().cloned().fold(f64::INFINITY, f64::min));
        let e_hat: Vec<f64> = (0..=grid.n).map(|_| floor * rng.gen_range(1.0..3.0)).collect();
        let coeffs = StageCostCoeffs::new(&pt.power, fuel_price_per_joule(1.51), params.mass, w1, w2, lambda);
        let init = State { t: 0.0, energy: e_hat[0], accel: 0.0 };
        let qp = assemble_qp(&grid, &coeffs, &pt.limits, params, &e_hat, &init).unwrap();
        let n = qp.problem.n;
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for &(i, j, v) in &qp.problem.hessian {
            dense[(i, j)] += v;
            if i != j {
                dense[(j, i)] += v;
            }
        }
        let scale = dense.amax();
        prop_assert!(dense.symmetric_eigenvalues().min() >= -1e-12 * scale);
    }

    #[test]
    fn qp_solves_are_bitwise_repeatable(seed in 0u64..1000, stages in 5usize..40) {
        let (p, _) = random_banded_qp(stages, seed);
        let a = solve(&p, None, &SolverOptions::default()).unwrap();
        let b = solve(&p, None, &SolverOptions::default()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn objective_scaling_keeps_argmin_and_scales_duals(seed in 0u64..1000, c in 0.1f64..100.0) {
        let (p, _) = random_banded_qp(20, seed);
        let mut q = p.clone();
        for h in &mut q.hessian {
            h.2 *= c;
        }
        for g in &mut q.linear {
            *g *= c;
        }
        let opts = SolverOptions { tol: 1e-10, ..SolverOptions::default() };
        let a = solve(&p, None, &opts).unwrap();
        let b = solve(&q, None, &opts).unwrap();
        let amax = |v: &[f64]| v.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
        let dx = a.x.iter().zip(&b.x).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
        prop_assert!(dx <= 1e-6 * amax(&a.x), "primal moved by {dx}");
        let dz = a.z.iter().zip(&b.z).fold(0.0_f64, |m, (x, y)| m.max((c * x - y).abs()));
        prop_assert!(dz <= 1e-5 * amax(&b.z), "duals off by {dz}");
    }
}

/// 10⁴ random points below the linearised max-force rows also lie below the
/// fitted limit and the tabulated envelope, for any linearisation point.
#[test]
fn cv_linearised_force_rows_are_inner() {
    let (params, pt) = cv();
    let map = pt.gear_map.as_ref().unwrap();
    let fit = pt.limits;
    let route =
        RoadProfile::new(vec![RoadSample::new(0.0, 0.0, 1.0, 40.0), RoadSample::new(1000.0, 0.0, 1.0, 40.0)]).unwrap();
    let grid = HorizonGrid::new(&route, params, 0.0, 1000.0, 1).unwrap();
    let e_of = |v: f64| 0.5 * params.mass * v * v;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut violations = 0;
    for _ in 0..10_000 {
        let e_hat = e_of(rng.gen_range(fit.v0..fit.v1));
        let lim = linearized_limits(PowertrainKind::Cv, &[e_hat, e_hat], &fit, &grid, params).unwrap();
        let v = rng.gen_range(fit.v0..fit.v1);
        let e = e_of(v);
        let f = lim[0].force_upper(e) - rng.gen_range(0.0..1e4);
        if f > fit.force_max_at_speed(v) + 1e-9 || f > map.force_max(e) + 1e-9 {
            violations += 1;
        }
    }
    assert_eq!(violations, 0);
}
