//! Symmetric banded LDLᵀ without pivoting.
//!
//! Intended for quasi-definite matrices `[[P, Aᵀ], [A, −δI]]` after a
//! bandwidth-reducing symmetric permutation. The sign of each pivot is known
//! in advance (positive for primal rows, negative for dual rows) and tiny or
//! wrong-signed pivots are replaced by a signed floor.

#[derive(Debug, Clone)]
pub struct BandedLdl {
    n: usize,
    bw: usize,
    /// Row-major lower band: `band[i * (bw + 1) + d]` holds entry `(i, i − d)`.
    band: Vec<f64>,
    diag: Vec<f64>,
    /// Number of pivots replaced by the floor in the last factorisation.
    pub perturbed: usize,
}

impl BandedLdl {
    pub fn new(n: usize, bw: usize) -> Self {
        Self { n, bw, band: vec![0.0; n * (bw + 1)], diag: vec![0.0; n], perturbed: 0 }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    pub fn clear(&mut self) {
        self.band.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Adds `v` at `(i, j)` of the symmetric matrix; `|i − j|` must be within the band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(r - c <= self.bw);
        self.band[r * (self.bw + 1) + (r - c)] += v;
    }

    /// Factorises in place. `positive[i]` gives the expected pivot sign.
    pub fn factor(&mut self, positive: &[bool], floor: f64) {
        let w = self.bw + 1;
        self.perturbed = 0;
        let mut tmp = vec![0.0; w];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            // L[i][j] D[j] for j < i accumulated in tmp
            for j in lo..i {
                let jlo = lo.max(j.saturating_sub(self.bw));
                let mut acc = self.band[i * w + (i - j)];
                for k in jlo..j {
                    acc -= tmp[i - k] * self.band[j * w + (j - k)];
                }
                tmp[i - j] = acc;
            }
            let mut d = self.band[i * w];
            for j in lo..i {
                let lij = tmp[i - j] / self.diag[j];
                d -= lij * tmp[i - j];
                self.band[i * w + (i - j)] = lij;
            }
            let want = positive[i];
            if want && !(d > floor) {
                d = floor.max(d.abs());
                self.perturbed += 1;
            } else if !want && !(d < -floor) {
                d = -(floor.max(d.abs()));
                self.perturbed += 1;
            }
            self.diag[i] = d;
            self.band[i * w] = 1.0;
        }
    }

    /// Solves `L D Lᵀ x = rhs` in place.
    pub fn solve(&self, x: &mut [f64]) {
        let w = self.bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let mut acc = x[i];
            for j in lo..i {
                acc -= self.band[i * w + (i - j)] * x[j];
            }
            x[i] = acc;
        }
        for i in 0..self.n {
            x[i] /= self.diag[i];
        }
        for i in (0..self.n).rev() {
            let v = x[i];
            let lo = i.saturating_sub(self.bw);
            for j in lo..i {
                x[j] -= self.band[i * w + (i - j)] * v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};

    #[test]
    fn solves_random_quasi_definite_band() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (n, bw) = (40, 4);
        let mut dense = DMatrix::<f64>::zeros(n, n);
        let positive: Vec<bool> = (0..n).map(|i| i % 3 != 2).collect();
        for i in 0..n {
            for j in i.saturating_sub(bw)..i {
                let v = rng.gen_range(-1.0..1.0);
                dense[(i, j)] = v;
                dense[(j, i)] = v;
            }
            dense[(i, i)] = if positive[i] { 5.0 } else { -5.0 };
        }
        // make it genuinely quasi-definite: no coupling among dual rows
        for i in 0..n {
            for j in 0..n {
                if i != j && !positive[i] && !positive[j] {
                    dense[(i, j)] = 0.0;
                }
            }
        }
        let mut f = BandedLdl::new(n, bw);
        for i in 0..n {
            for j in i.saturating_sub(bw)..=i {
                if dense[(i, j)] != 0.0 {
                    f.add(i, j, dense[(i, j)]);
                }
            }
        }
        f.factor(&positive, 1e-14);
        assert_eq!(f.perturbed, 0);
        let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut x = rhs.clone();
        f.solve(&mut x);
        let r = &dense * DVector::from_vec(x) - DVector::from_vec(rhs);
        assert!(r.amax() < 1e-11, "{}", r.amax());
    }
}
