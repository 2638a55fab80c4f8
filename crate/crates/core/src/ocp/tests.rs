use super::*;
use crate::model::{RoadSample, SyntheticRoute};
use crate::powertrain::FitResidual;
use crate::qp::{solve, QpStatus, SolverOptions};
use approx::assert_relative_eq;

fn cv_fit() -> PowerFit {
    PowerFit {
        kind: PowertrainKind::Cv,
        coeffs: [17_559.0, 0.896, 2.1305, 0.0],
        speed_range: (50.0 / 3.6, 100.0 / 3.6),
        residual: FitResidual::default(),
    }
}

fn cv_limits() -> ForceLimitFit {
    ForceLimitFit {
        y0: -2067.0,
        y1: 355_777.0,
        x0: 0.0,
        x1: 0.0,
        f_max: 175_000.0,
        f_min: 0.0,
        v0: 8.0 / 3.6,
        v1: 30.0,
    }
}

fn ev_limits() -> ForceLimitFit {
    ForceLimitFit {
        y0: 0.0,
        y1: 350_000.0,
        x0: 0.0,
        x1: -350_000.0,
        f_max: 60_000.0,
        f_min: -60_000.0,
        v0: 55.0 / 3.6,
        v1: 30.0,
    }
}

fn flat(length: f64) -> RoadProfile {
    RoadProfile::new(vec![RoadSample::new(0.0, 0.0, 1.0, 40.0), RoadSample::new(length, 0.0, 1.0, 40.0)]).unwrap()
}

fn hilly() -> RoadProfile {
    RoadProfile::synthetic(&SyntheticRoute { length: 20_000.0, ..Default::default() }).unwrap()
}

fn coeffs(lambda: f64) -> StageCostCoeffs {
    StageCostCoeffs::new(&cv_fit(), fuel_price_per_joule(1.51), 40_000.0, 0.0, 2.0, lambda)
}

/// Physical Hessian diagonal and gradient of an assembled problem.
fn physical_terms(h: &HorizonQp) -> (Vec<f64>, Vec<f64>) {
    let p = &h.problem;
    let mut diag = vec![0.0; p.n];
    for &(i, j, v) in &p.hessian {
        assert_eq!(i, j, "Hessian must be diagonal");
        diag[i] += v * p.obj_scale / (p.scale[i] * p.scale[i]);
    }
    let lin = (0..p.n).map(|i| p.linear[i] * p.obj_scale / p.scale[i]).collect();
    (diag, lin)
}

#[test]
fn stage_cost_reference_value() {
    let c = StageCostCoeffs {
        kind: PowertrainKind::Cv,
        energy_price: 3.5e-8,
        power: [2000.0, 0.0, 0.0, 0.0],
        mass: 40_000.0,
        w1: 0.0,
        w2: 0.0,
        lambda: 0.0,
    };
    let cost = stage_cost(9.8765e6, 0.3, 0.01, 0.0, &c).unwrap();
    assert_relative_eq!(cost, 3.5e-8 * 2000.0 * (40_000.0 / (2.0 * 9.8765e6f64)).sqrt(), max_relative = 1e-12);
    assert!((cost - 3.15e-6).abs() < 0.01e-6);
}

#[test]
fn stage_cost_null_and_kind_independence() {
    let zero = StageCostCoeffs {
        kind: PowertrainKind::Ev,
        energy_price: 0.0,
        power: [0.0; 4],
        mass: 40_000.0,
        w1: 0.0,
        w2: 0.0,
        lambda: 0.0,
    };
    assert_eq!(stage_cost(1e6, 1.0, 1.0, 1e4, &zero).unwrap(), 0.0);
    let cv = coeffs(0.004);
    let ev = StageCostCoeffs { kind: PowertrainKind::Ev, ..cv };
    assert_eq!(stage_cost(8e6, 0.1, 0.002, 9e3, &cv).unwrap(), stage_cost(8e6, 0.1, 0.002, 9e3, &ev).unwrap());
    assert!(matches!(stage_cost(0.0, 0.0, 0.0, 0.0, &cv), Err(Error::Domain(_))));
}

#[test]
fn sqrt_tangent_underestimates() {
    let t = linearize_sqrt_term(4.0).unwrap();
    assert_relative_eq!(t.eval(1.0), 0.6875, max_relative = 1e-15);
    assert_eq!(t.eval(4.0), 0.5);
    let e_hat = 9.0e6;
    let t = linearize_sqrt_term(e_hat).unwrap();
    for i in 0..=200 {
        let e = e_hat / 4.0 * 16f64.powf(i as f64 / 200.0);
        assert!(t.eval(e) <= e.powf(-0.5) * (1.0 + 1e-14));
    }
    assert!(linearize_sqrt_term(-1.0).is_err());
}

#[test]
fn zero_curvature_limit_is_constant() {
    let params = VehicleParams::heavy_truck();
    let grid = HorizonGrid::new(&flat(3000.0), &params, 0.0, 3000.0, 3).unwrap();
    let fit = ForceLimitFit { y1: 0.0, y0: 50_000.0, ..cv_limits() };
    for e_hat in [5e6, 9e6, 1.2e7] {
        let lim = linearized_limits(PowertrainKind::Cv, &[e_hat; 4], &fit, &grid, &params).unwrap();
        for l in &lim {
            for e in [4e6, 8e6, 1.5e7] {
                assert_eq!(l.force_upper(e), 50_000.0);
            }
        }
    }
}

#[test]
fn cv_tangent_is_inner() {
    let params = VehicleParams::heavy_truck();
    let grid = HorizonGrid::new(&flat(1000.0), &params, 0.0, 1000.0, 1).unwrap();
    let fit = cv_limits();
    let m = params.mass;
    for e_hat in [2e6, 6e6, 1.0e7, 1.6e7] {
        let lim = linearized_limits(PowertrainKind::Cv, &[e_hat, e_hat], &fit, &grid, &params).unwrap();
        for i in 0..100 {
            let e = 1e6 + 1.7e7 * i as f64 / 99.0;
            let exact = fit.y0 + fit.y1 * (m / (2.0 * e)).sqrt();
            assert!(lim[0].force_upper(e) <= exact + 1e-9);
            assert_eq!(lim[0].force_lower(e), 0.0);
        }
    }
}

#[test]
fn ev_linearised_band_is_contained() {
    use rand::{Rng, SeedableRng};
    let params = VehicleParams::electric_truck();
    let grid = HorizonGrid::new(&flat(1000.0), &params, 0.0, 1000.0, 1).unwrap();
    let fit = ev_limits();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let e_of = |v: f64| 0.5 * params.mass * v * v;
    for _ in 0..50 {
        let e_hat = e_of(rng.gen_range(16.0..30.0));
        let lim = linearized_limits(PowertrainKind::Ev, &[e_hat, e_hat], &fit, &grid, &params).unwrap();
        for _ in 0..200 {
            let v = rng.gen_range(fit.v0..fit.v1);
            let e = e_of(v);
            let (lo, hi) = (lim[0].force_lower(e), lim[0].force_upper(e));
            if lo > hi {
                continue;
            }
            let f = rng.gen_range(lo..=hi);
            assert!(f <= fit.force_max_at_speed(v) + 1e-9);
            assert!(f >= fit.force_min_at_speed(v) - 1e-9);
        }
    }
}

#[test]
fn accel_rows_follow_force_rows() {
    let params = VehicleParams::heavy_truck();
    let grid = HorizonGrid::new(&hilly(), &params, 0.0, 3000.0, 10).unwrap();
    let e = 8e6;
    let lim = linearized_limits(PowertrainKind::Cv, &[e; 11], &cv_limits(), &grid, &params).unwrap();
    for (k, l) in lim.iter().enumerate() {
        let drag = params.drag_per_energy() * e;
        let hi = (l.force_upper(e) - drag - grid.grade_force[k]) / params.mass;
        assert_relative_eq!(l.accel_upper(e), hi.min(params.accel_max), max_relative = 1e-12);
        let lo = (params.brake_force_min - drag - grid.grade_force[k]) / params.mass;
        assert_relative_eq!(l.accel_lower(e), lo.max(params.accel_min), max_relative = 1e-12);
    }
}

#[test]
fn single_interval_matches_hand_kkt() {
    // EV, flat road, decelerating start: the only free choices are j_0 and
    // the split of the fixed total force between F_0 and F_brk,0.
    let mut params = VehicleParams::electric_truck();
    params.rolling_coeff = 0.0;
    let grid = HorizonGrid::new(&flat(300.0), &params, 0.0, 300.0, 1).unwrap();
    let c = StageCostCoeffs {
        kind: PowertrainKind::Ev,
        energy_price: 5e-8,
        power: [2000.0, 0.5, 1.0, 1e-4],
        mass: params.mass,
        w1: 0.01,
        w2: 3.0,
        lambda: 0.004,
    };
    let e0 = 0.5 * params.mass * 20.0f64.powi(2);
    let a0 = -0.3;
    let init = State { t: 0.0, energy: e0, accel: a0 };
    let h = assemble_qp(&grid, &c, &ev_limits(), &params, &[e0, e0], &init).unwrap();
    let sol = solve(&h.problem, None, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, QpStatus::Optimal);
    let plan = h.plan(&sol.x);
    let total = params.mass * a0 + params.drag_per_energy() * e0;
    // argmin p2 F + p3 F² on [total, total − F_brk_min]
    let f_star = (-c.power[2] / (2.0 * c.power[3])).clamp(total, total - params.brake_force_min);
    assert_relative_eq!(plan.force[0], f_star, epsilon = 1e-3);
    assert_relative_eq!(plan.brake[0], total - f_star, epsilon = 1e-3);
    assert!(plan.jerk[0].abs() < 1e-9);
    assert_relative_eq!(plan.energy[1], e0 + 300.0 * params.mass * a0, max_relative = 1e-9);
    let expected = 300.0 * stage_cost(e0, a0, 0.0, f_star, &c).unwrap();
    assert_relative_eq!(h.problem.physical_objective(&sol.x), expected, max_relative = 1e-9);
}

#[test]
fn lambda_only_touches_energy_block() {
    let params = VehicleParams::heavy_truck();
    let grid = HorizonGrid::new(&hilly(), &params, 0.0, 6000.0, 20).unwrap();
    let e_hat: Vec<f64> = (0..=20).map(|k| 8e6 + 1e5 * k as f64).collect();
    let init = State { t: 0.0, energy: e_hat[0], accel: 0.0 };
    let delta = 0.002;
    let a = assemble_qp(&grid, &coeffs(0.003), &cv_limits(), &params, &e_hat, &init).unwrap();
    let b = assemble_qp(&grid, &coeffs(0.003 + delta), &cv_limits(), &params, &e_hat, &init).unwrap();
    let (ha, ga) = physical_terms(&a);
    let (hb, gb) = physical_terms(&b);
    let root = (params.mass / 2.0).sqrt();
    for i in 0..a.layout.len() {
        let is_energy = i <= 20;
        if is_energy && i < 20 {
            let e = e_hat[i];
            assert_relative_eq!(hb[i] - ha[i], grid.ds * 0.75 * delta * root * e.powf(-2.5), max_relative = 1e-9);
            assert_relative_eq!(gb[i] - ga[i], -grid.ds * 1.25 * delta * root * e.powf(-1.5), max_relative = 1e-9);
        } else {
            assert_relative_eq!(ha[i], hb[i], max_relative = 1e-12);
            assert_relative_eq!(ga[i], gb[i], max_relative = 1e-12, epsilon = 1e-300);
        }
    }
}

#[test]
fn structure_is_stage_banded() {
    let params = VehicleParams::heavy_truck();
    let grid = HorizonGrid::new(&hilly(), &params, 0.0, 15_000.0, 50).unwrap();
    let e_hat = vec![8e6; 51];
    let init = State { t: 0.0, energy: 8e6, accel: 0.0 };
    let h = assemble_qp(&grid, &coeffs(0.005), &cv_limits(), &params, &e_hat, &init).unwrap();
    let p = &h.problem;
    for &(i, j, v) in &p.hessian {
        assert_eq!(p.var_stage[i], p.var_stage[j]);
        assert!(v >= 0.0);
    }
    for rows in [&p.eq, &p.ineq] {
        for r in 0..rows.rows() {
            let (idx, _) = rows.row(r);
            let st: Vec<usize> = idx.iter().map(|&j| p.var_stage[j]).collect();
            let span = st.iter().max().unwrap() - st.iter().min().unwrap();
            assert!(span <= 1, "row {r} spans {span} stages");
        }
    }
}

#[test]
fn hessian_psd_for_random_linearisations() {
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    let params = VehicleParams::heavy_truck();
    let grid = HorizonGrid::new(&hilly(), &params, 0.0, 3000.0, 8).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let e_hat: Vec<f64> = (0..=8).map(|_| rng.gen_range(4e6..1.6e7)).collect();
        let init = State { t: 0.0, energy: e_hat[0], accel: 0.0 };
        let h = assemble_qp(&grid, &coeffs(rng.gen_range(0.0..0.02)), &cv_limits(), &params, &e_hat, &init).unwrap();
        let n = h.problem.n;
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for &(i, j, v) in &h.problem.hessian {
            dense[(i, j)] += v;
            if i != j {
                dense[(j, i)] += v;
            }
        }
        let eig = dense.clone().symmetric_eigenvalues();
        let norm = dense.amax();
        assert!(eig.min() >= -1e-8 * norm);
    }
}

#[test]
fn shifted_horizon_reproduces_tail() {
    let params = VehicleParams::heavy_truck();
    let profile = hilly();
    let ds = 300.0;
    let a = HorizonGrid::on_route(&profile, &params, 3000.0, 6000.0, ds).unwrap();
    let b = HorizonGrid::on_route(&profile, &params, 3300.0, 5700.0, ds).unwrap();
    assert_eq!(a.n, 20);
    assert_eq!(b.n, 19);
    let e_hat: Vec<f64> = (0..=20).map(|k| 7.5e6 + 4e4 * k as f64).collect();
    let la = linearized_limits(PowertrainKind::Cv, &e_hat, &cv_limits(), &a, &params).unwrap();
    let lb = linearized_limits(PowertrainKind::Cv, &e_hat[1..], &cv_limits(), &b, &params).unwrap();
    for k in 0..19 {
        assert_relative_eq!(a.grade_force[k + 1], b.grade_force[k], max_relative = 1e-12);
        assert_eq!(a.v_max[k + 1], b.v_max[k]);
        assert_eq!(la[k + 1], lb[k]);
    }
    let c = coeffs(0.005);
    let qa =
        assemble_qp(&a, &c, &cv_limits(), &params, &e_hat, &State { t: 0.0, energy: e_hat[0], accel: 0.0 }).unwrap();
    let qb = assemble_qp(&b, &c, &cv_limits(), &params, &e_hat[1..], &State { t: 0.0, energy: e_hat[1], accel: 0.0 })
        .unwrap();
    let (ha, ga) = physical_terms(&qa);
    let (hb, gb) = physical_terms(&qb);
    for k in 0..19 {
        for (ia, ib) in [
            (qa.layout.energy(k + 1), qb.layout.energy(k)),
            (qa.layout.jerk(k + 1), qb.layout.jerk(k)),
            (qa.layout.force(k + 1), qb.layout.force(k)),
        ] {
            assert_relative_eq!(ha[ia], hb[ib], max_relative = 1e-12);
            assert_relative_eq!(ga[ia], gb[ib], max_relative = 1e-12);
        }
    }
}

#[test]
fn horizon_clips_at_route_end() {
    let params = VehicleParams::heavy_truck();
    let profile = flat(10_000.0);
    let g = HorizonGrid::on_route(&profile, &params, 9100.0, 6000.0, 300.0).unwrap();
    assert_eq!(g.n, 3);
    assert_relative_eq!(g.length, 900.0, max_relative = 1e-12);
    let g = HorizonGrid::on_route(&profile, &params, 10_000.0, 6000.0, 300.0).unwrap();
    assert_eq!(g.n, 0);
}

#[test]
fn prices() {
    assert_relative_eq!(electricity_price_per_joule(0.18), 5e-8, max_relative = 1e-12);
    assert_relative_eq!(fuel_price_per_joule(1.51), 1.51 / (0.832 * 42.6e6), max_relative = 1e-12);
}
