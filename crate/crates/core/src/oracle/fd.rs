/// Central-difference gradient with relative step `h · max(|x_i|, 1)`.
pub fn finite_diff_grad<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut point = x.to_vec();
    (0..x.len())
        .map(|i| {
            let step = h * x[i].abs().max(1.0);
            point[i] = x[i] + step;
            let up = f(&point);
            point[i] = x[i] - step;
            let down = f(&point);
            point[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let f = |x: &[f64]| 3.0 * x[0] * x[0] - 2.0 * x[0] * x[1] + 0.5 * x[1] * x[1] + x[1];
        let g = finite_diff_grad(f, &[1.5, -2.0], 1e-4);
        assert!((g[0] - (9.0 + 4.0)).abs() < 1e-8);
        assert!((g[1] - (-3.0 - 2.0 + 1.0)).abs() < 1e-8);
    }

    #[test]
    fn step_sweep_has_interior_minimum() {
        let f = |x: &[f64]| x[0].exp() * x[0].sin();
        let x = 0.7_f64;
        let exact = x.exp() * (x.sin() + x.cos());
        let steps = [1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9];
        let err: Vec<f64> = steps.iter().map(|h| (finite_diff_grad(f, &[x], *h)[0] - exact).abs()).collect();
        let best = (0..err.len()).min_by(|a, b| err[*a].total_cmp(&err[*b])).unwrap();
        assert!((2..=4).contains(&best), "errors {err:?}");
        assert!(err[0] > err[best] && err[6] > err[best]);
    }
}
