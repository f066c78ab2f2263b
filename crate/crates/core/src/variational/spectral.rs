//! Exact inverses of `σ - wΔ` on regular grids, periodic or with zero
//! boundary values, by separable orthonormal eigenbases (DFT / DST-I).

use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum AxisKind {
    Periodic,
    Dirichlet,
}

/// Orthonormal eigenbasis of the 1-D discrete Laplacian on `m` unknowns.
#[derive(Debug, Clone)]
pub(crate) struct SeparableSpectrum {
    m: usize,
    d: usize,
    /// `basis[k * m + j]`: entry `j` of eigenvector `k`.
    basis: Vec<f64>,
    /// Eigenvalues of `-Δ` per axis index.
    eig: Vec<f64>,
}

impl SeparableSpectrum {
    pub fn new(kind: AxisKind, m: usize, d: usize) -> Self {
        let mut basis = vec![0.0; m * m];
        let mut eig = vec![0.0; m];
        let mf = m as f64;
        match kind {
            AxisKind::Dirichlet => {
                let norm = (2.0 / (mf + 1.0)).sqrt();
                for k in 0..m {
                    let theta = PI * (k + 1) as f64 / (mf + 1.0);
                    eig[k] = 2.0 * (1.0 - theta.cos());
                    for j in 0..m {
                        basis[k * m + j] = norm * (theta * (j + 1) as f64).sin();
                    }
                }
            }
            AxisKind::Periodic => {
                // index 0 constant, then cos/sin pairs, then the alternating mode
                let mut k = 0;
                let mut push = |row: usize, freq: usize, f: &dyn Fn(f64) -> f64, scale: f64| {
                    let theta = 2.0 * PI * freq as f64 / mf;
                    eig[row] = 2.0 * (1.0 - theta.cos());
                    for j in 0..m {
                        basis[row * m + j] = scale * f(theta * j as f64);
                    }
                };
                push(k, 0, &|_| 1.0, 1.0 / mf.sqrt());
                k += 1;
                let pair = (2.0 / mf).sqrt();
                for freq in 1..m.div_ceil(2) {
                    push(k, freq, &f64::cos, pair);
                    push(k + 1, freq, &f64::sin, pair);
                    k += 2;
                }
                if m.is_multiple_of(2) && m > 1 {
                    push(k, m / 2, &f64::cos, 1.0 / mf.sqrt());
                }
            }
        }
        Self { m, d, basis, eig }
    }

    pub fn len(&self) -> usize {
        self.m.pow(self.d as u32)
    }

    /// Analysis (values to coefficients) or synthesis, along every axis.
    fn transform(&self, data: &mut [f64], analysis: bool) {
        let m = self.m;
        let v = self.len();
        let mut line = vec![0.0; m];
        for axis in 0..self.d {
            let stride = m.pow((self.d - 1 - axis) as u32);
            for start in 0..v {
                if !(start / stride).is_multiple_of(m) {
                    continue;
                }
                for (out, o) in line.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for i in 0..m {
                        let b = if analysis {
                            self.basis[out * m + i]
                        } else {
                            self.basis[i * m + out]
                        };
                        acc += b * data[start + i * stride];
                    }
                    *o = acc;
                }
                for (i, x) in line.iter().enumerate() {
                    data[start + i * stride] = *x;
                }
            }
        }
    }

    /// `(σ - wΔ)^{-1} g` on the active grid.
    pub fn solve(&self, sigma: f64, w: f64, g: &[f64]) -> Vec<f64> {
        let mut c = g.to_vec();
        self.transform(&mut c, true);
        let m = self.m;
        let mut k = vec![0; self.d];
        for (idx, x) in c.iter_mut().enumerate() {
            let mut rest = idx;
            for slot in k.iter_mut().rev() {
                *slot = rest % m;
                rest /= m;
            }
            let mu: f64 = k.iter().map(|&ki| self.eig[ki]).sum();
            *x /= sigma + w * mu;
        }
        self.transform(&mut c, false);
        c
    }
}
