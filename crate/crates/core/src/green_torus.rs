//! Killed-walk Green function on the discrete torus, in spectral form.
//!
//! With `μ_k = Σ_i 2(1 - cos(2π k_i / N))` the eigenvalues of `-Δ`,
//!
//! ```text
//! G(0, x) = N^{-d} Σ_k cos(2π k·x / N) / (λ + μ_k)
//! p_s(0, x) = N^{-d} Σ_k exp(-s μ_k) cos(2π k·x / N)
//! ```
//!
//! so that `G = (λ - Δ)^{-1} = ∫_0^∞ e^{-λ s} p_s ds`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::table::{num, CsvTable};
use crate::torus::TorusShape;

/// `2(1 - cos(2π k / n))` for `k = 0..n`.
fn axis_eigenvalues(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 2.0 * (1.0 - (2.0 * PI * k as f64 / n as f64).cos()))
        .collect()
}

#[derive(Debug)]
pub struct GreenOperator {
    shape: TorusShape,
    lambda: f64,
    spectrum: Vec<f64>,
    kernel: OnceLock<Vec<f64>>,
}

impl Clone for GreenOperator {
    fn clone(&self) -> Self {
        let kernel = OnceLock::new();
        if let Some(k) = self.kernel.get() {
            let _ = kernel.set(k.clone());
        }
        Self {
            shape: self.shape,
            lambda: self.lambda,
            spectrum: self.spectrum.clone(),
            kernel,
        }
    }
}

pub fn build_green(n: usize, d: usize, lambda: f64) -> Result<GreenOperator> {
    if n == 0 || d == 0 {
        return Err(invalid("torus side and dimension must be >= 1"));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(invalid(format!("lambda must be > 0, got {lambda}")));
    }
    let shape = TorusShape::new(n, d);
    let axis = axis_eigenvalues(n);
    let mut coords = vec![0; d];
    let spectrum = (0..shape.volume())
        .map(|k| {
            shape.coords(k, &mut coords);
            coords.iter().map(|&c| axis[c]).sum()
        })
        .collect();
    Ok(GreenOperator {
        shape,
        lambda,
        spectrum,
        kernel: OnceLock::new(),
    })
}

impl GreenOperator {
    pub fn shape(&self) -> TorusShape {
        self.shape
    }

    pub fn n(&self) -> usize {
        self.shape.n
    }

    pub fn d(&self) -> usize {
        self.shape.d
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn volume(&self) -> usize {
        self.shape.volume()
    }

    /// Eigenvalues `μ_k` of `-Δ`, indexed like torus sites.
    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    /// `G(0, 0) = N^{-d} Σ_k 1/(λ + μ_k)`.
    pub fn origin(&self) -> f64 {
        let s: f64 = self.spectrum.iter().map(|m| 1.0 / (self.lambda + m)).sum();
        s / self.volume() as f64
    }

    /// `G(0, x)` by the full mode sum.
    pub fn value(&self, x: &[usize]) -> f64 {
        let n = self.shape.n as f64;
        let mut k = vec![0; self.shape.d];
        let mut acc = 0.0;
        for (idx, mu) in self.spectrum.iter().enumerate() {
            self.shape.coords(idx, &mut k);
            let phase: f64 = k.iter().zip(x).map(|(&ki, &xi)| (ki * xi) as f64).sum();
            acc += (2.0 * PI * phase / n).cos() / (self.lambda + mu);
        }
        acc / self.volume() as f64
    }

    /// `G(x, y) = G(0, y - x)`.
    pub fn between(&self, x: usize, y: usize) -> f64 {
        self.kernel()[self.shape.difference(y, x)]
    }

    /// `G(0, x)` for every site `x`, computed once by a separable transform.
    pub fn kernel(&self) -> &[f64] {
        self.kernel.get_or_init(|| {
            let weights: Vec<f64> = self.spectrum.iter().map(|m| 1.0 / (self.lambda + m)).collect();
            inverse_cosine_transform(self.shape, &weights)
        })
    }

    /// `(G f)(x) = Σ_y G(x, y) f(y)` as a circulant convolution.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let kernel = self.kernel();
        let v = self.volume();
        assert_eq!(f.len(), v);
        (0..v)
            .map(|x| {
                f.iter()
                    .enumerate()
                    .map(|(y, fy)| kernel[self.shape.difference(y, x)] * fy)
                    .sum()
            })
            .collect()
    }

    /// `<f, G f>`.
    pub fn quadratic_form(&self, f: &[f64]) -> f64 {
        self.apply(f).iter().zip(f).map(|(a, b)| a * b).sum()
    }

    /// `(λ - Δ) h`, the inverse of [`GreenOperator::apply`].
    pub fn apply_inverse(&self, h: &[f64]) -> Vec<f64> {
        let lap = laplacian(self.shape, h);
        h.iter().zip(lap).map(|(hx, l)| self.lambda * hx - l).collect()
    }
}

/// `N^{-d} Σ_k w_k cos(2π k·x/N)` for all `x`, for weights even in `k`.
/// Separable: one 1-D transform per axis, `O(N^d · N · d)`.
fn inverse_cosine_transform(shape: TorusShape, weights: &[f64]) -> Vec<f64> {
    let n = shape.n;
    let v = shape.volume();
    let cos: Vec<f64> = (0..n).map(|j| (2.0 * PI * j as f64 / n as f64).cos()).collect();
    let sin: Vec<f64> = (0..n).map(|j| (2.0 * PI * j as f64 / n as f64).sin()).collect();
    let mut re = weights.to_vec();
    let mut im = vec![0.0; v];
    let mut line_re = vec![0.0; n];
    let mut line_im = vec![0.0; n];
    for axis in 0..shape.d {
        let stride = n.pow((shape.d - 1 - axis) as u32);
        for start in 0..v {
            if !(start / stride).is_multiple_of(n) {
                continue;
            }
            for x in 0..n {
                let (mut sr, mut si) = (0.0, 0.0);
                for k in 0..n {
                    let idx = start + k * stride;
                    let j = (k * x) % n;
                    sr += re[idx] * cos[j] - im[idx] * sin[j];
                    si += re[idx] * sin[j] + im[idx] * cos[j];
                }
                line_re[x] = sr;
                line_im[x] = si;
            }
            for x in 0..n {
                re[start + x * stride] = line_re[x];
                im[start + x * stride] = line_im[x];
            }
        }
    }
    let scale = 1.0 / v as f64;
    re.iter().map(|r| r * scale).collect()
}

/// `Δh(x) = Σ_{y~x} (h(y) - h(x))` on the torus.
pub fn laplacian(shape: TorusShape, h: &[f64]) -> Vec<f64> {
    (0..shape.volume())
        .map(|x| {
            let mut acc = 0.0;
            for axis in 0..shape.d {
                acc += h[shape.shift(x, axis, 1)] + h[shape.shift(x, axis, -1)] - 2.0 * h[x];
            }
            acc
        })
        .collect()
}

/// `Σ_x Σ_{i=1}^d (h(x + e_i) - h(x))^2`, forward differences, each edge once.
pub fn gradient_energy(shape: TorusShape, h: &[f64]) -> f64 {
    let mut acc = 0.0;
    for x in 0..shape.volume() {
        for axis in 0..shape.d {
            let diff = h[shape.shift(x, axis, 1)] - h[x];
            acc += diff * diff;
        }
    }
    acc
}

/// One-dimensional transition probability `p_s(0, x)` on the cycle of side `n`.
fn heat_kernel_1d(n: usize, s: f64, x: usize) -> f64 {
    let axis = axis_eigenvalues(n);
    let mut acc = 0.0;
    for (k, mu) in axis.iter().enumerate() {
        acc += (-s * mu).exp() * (2.0 * PI * (k * x) as f64 / n as f64).cos();
    }
    acc / n as f64
}

/// `p_s(0, x)` for the torus walk. The coordinates of the rate-`2d` walk are
/// independent rate-2 cycle walks, so the kernel factorizes over axes.
pub fn heat_kernel(n: usize, d: usize, s: f64, x: &[usize]) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(invalid(format!("time must be >= 0, got {s}")));
    }
    if n == 0 || x.len() != d {
        return Err(invalid("torus side must be >= 1 and x must have d coordinates"));
    }
    if s == 0.0 {
        return Ok(if x.iter().all(|&c| c % n == 0) { 1.0 } else { 0.0 });
    }
    Ok(x.iter().map(|&c| heat_kernel_1d(n, s, c % n)).product())
}

/// `max_s s^{d/2} |p_s(0,0) - N^{-d}|` over the grid: the empirical constant
/// of the on-diagonal Nash-type decay bound.
pub fn check_nash_bound(n: usize, d: usize, s_grid: &[f64]) -> Result<f64> {
    if s_grid.iter().any(|&s| !(s > 0.0)) {
        return Err(invalid("time grid must be positive"));
    }
    let origin = vec![0; d];
    let floor = (n as f64).powi(-(d as i32));
    let mut worst = 0.0f64;
    for &s in s_grid {
        let p = heat_kernel(n, d, s, &origin)?;
        worst = worst.max(s.powf(d as f64 / 2.0) * (p - floor).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenScalingRow {
    pub alpha: f64,
    pub n: usize,
    pub lambda: f64,
    pub green00: f64,
}

/// `G_{Rα, aα^{-2}}(0, 0)` along an increasing grid of `α`, with torus side
/// `round(Rα) >= 2`.
pub fn green_origin_scaling(
    d: usize,
    a: f64,
    radius: f64,
    alpha_grid: &[f64],
) -> Result<Vec<GreenScalingRow>> {
    if alpha_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("alpha grid must be increasing"));
    }
    alpha_grid
        .iter()
        .map(|&alpha| {
            let n = (radius * alpha).round() as usize;
            if n < 2 {
                return Err(invalid(format!("torus side R*alpha={n} must be >= 2")));
            }
            let lambda = a * alpha.powi(-2);
            let green00 = green_origin_fast(n, d, lambda);
            Ok(GreenScalingRow {
                alpha,
                n,
                lambda,
                green00,
            })
        })
        .collect()
}

/// `G(0,0)` without materialising the spectrum; used for large tori.
fn green_origin_fast(n: usize, d: usize, lambda: f64) -> f64 {
    let axis = axis_eigenvalues(n);
    // iterate the sum over modes as nested partial sums of eigenvalues
    fn rec(axis: &[f64], depth: usize, partial: f64, lambda: f64) -> f64 {
        if depth == 0 {
            return 1.0 / (lambda + partial);
        }
        axis.iter().map(|m| rec(axis, depth - 1, partial + m, lambda)).sum()
    }
    rec(&axis, d, 0.0, lambda) / (n as f64).powi(d as i32)
}

pub fn scaling_csv(rows: &[GreenScalingRow]) -> CsvTable {
    let mut table = CsvTable::new(&["alpha", "N", "lambda", "green00"]);
    for r in rows {
        table.push(vec![num(r.alpha), r.n.to_string(), num(r.lambda), num(r.green00)]);
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn single_site_torus() {
        for d in 1..4 {
            let g = build_green(1, d, 0.37).unwrap();
            assert!((g.origin() - 1.0 / 0.37).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_value_three_cycle() {
        let g = build_green(3, 1, 1.0).unwrap();
        let mut spec = g.spectrum().to_vec();
        spec.iter_mut().for_each(|m| *m = (*m * 1e12).round() / 1e12);
        assert_eq!(spec, vec![0.0, 3.0, 3.0]);
        assert!((g.origin() - 0.5).abs() < 1e-15);
        assert!((g.value(&[0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn spectrum_invariants() {
        let g = build_green(6, 2, 0.5).unwrap();
        let s = g.shape();
        assert_eq!(g.spectrum()[0], 0.0);
        let mut c = [0; 2];
        for k in 0..s.volume() {
            let mu = g.spectrum()[k];
            assert!((0.0..=8.0 + 1e-12).contains(&mu));
            s.coords(k, &mut c);
            let refl = s.index(&[(6 - c[0]) % 6, (6 - c[1]) % 6]);
            assert!((g.spectrum()[refl] - mu).abs() < 1e-12);
        }
    }

    #[test]
    fn row_sums_and_origin_bound() {
        for (n, d, lambda) in [(5, 1, 0.1), (4, 2, 1.0), (3, 3, 2.0), (7, 2, 0.01)] {
            let g = build_green(n, d, lambda).unwrap();
            let total: f64 = g.kernel().iter().sum();
            assert!((total - 1.0 / lambda).abs() <= 1e-12 / lambda);
            assert!(g.origin() <= 1.0 / lambda);
            // separable transform agrees with the direct mode sum
            let s = g.shape();
            let mut x = vec![0; d];
            for idx in 0..s.volume() {
                s.coords(idx, &mut x);
                assert!((g.kernel()[idx] - g.value(&x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inverse_recovers_input() {
        let g = build_green(5, 2, 0.3).unwrap();
        let mut rng = stream(11, 0);
        let f: Vec<f64> = (0..g.volume()).map(|_| rng.random::<f64>() - 0.5).collect();
        let back = g.apply_inverse(&g.apply(&f));
        let scale = f.iter().map(|x| x.abs()).fold(0.0, f64::max);
        for (a, b) in back.iter().zip(&f) {
            assert!((a - b).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn positive_definite_on_random_vectors() {
        for (n, d, lambda) in [(4, 1, 0.1), (3, 2, 1.0), (6, 2, 0.1)] {
            let g = build_green(n, d, lambda).unwrap();
            let mut rng = stream(12, n as u64);
            for _ in 0..100 {
                let f: Vec<f64> = (0..g.volume()).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                assert!(g.quadratic_form(&f) > 0.0);
            }
        }
    }

    #[test]
    fn dirichlet_form_convention() {
        // <h, -Δh> equals the forward-difference energy, each edge counted once
        let shape = TorusShape::new(5, 3);
        let mut rng = stream(13, 0);
        let h: Vec<f64> = (0..shape.volume()).map(|_| rng.random::<f64>()).collect();
        let lap = laplacian(shape, &h);
        let form: f64 = -h.iter().zip(&lap).map(|(a, b)| a * b).sum::<f64>();
        let energy = gradient_energy(shape, &h);
        assert!((form - energy).abs() < 1e-10 * energy);
    }

    #[test]
    fn heat_kernel_values() {
        assert_eq!(heat_kernel(5, 2, 0.0, &[0, 0]).unwrap(), 1.0);
        assert_eq!(heat_kernel(5, 2, 0.0, &[1, 0]).unwrap(), 0.0);
        // two-state chain with switching rate 2
        let p = heat_kernel(2, 1, 1.0, &[0]).unwrap();
        assert!((p - (1.0 + (-4.0f64).exp()) / 2.0).abs() < 1e-15);
        // long-time limit approaches the uniform law within the spectral gap
        let n = 6;
        let s = 30.0;
        let gap = 2.0 * (1.0 - (2.0 * PI / n as f64).cos());
        let p = heat_kernel(n, 2, s, &[0, 0]).unwrap();
        assert!((p - 1.0 / 36.0).abs() <= 4.0 * (-s * gap).exp());
        assert!(heat_kernel(3, 1, -1.0, &[0]).is_err());
    }

    #[test]
    fn heat_kernel_factorization_matches_mode_sum() {
        let (n, d, s) = (4, 2, 0.7);
        let g = build_green(n, d, 1.0).unwrap();
        let shape = g.shape();
        let mut k = vec![0; d];
        for x0 in 0..n {
            for x1 in 0..n {
                let mut acc = 0.0;
                for (idx, mu) in g.spectrum().iter().enumerate() {
                    shape.coords(idx, &mut k);
                    let ph = (k[0] * x0 + k[1] * x1) as f64;
                    acc += (-s * mu).exp() * (2.0 * PI * ph / n as f64).cos();
                }
                acc /= 16.0;
                assert!((heat_kernel(n, d, s, &[x0, x1]).unwrap() - acc).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn nash_statistic_decays_at_fixed_n() {
        let late = check_nash_bound(8, 1, &[200.0]).unwrap();
        let early = check_nash_bound(8, 1, &[5.0]).unwrap();
        assert!(late < 1e-6 && early > late);
        assert!(check_nash_bound(8, 3, &[1.0, 10.0, 100.0]).unwrap().is_finite());
        assert!(check_nash_bound(8, 1, &[0.0]).is_err());
    }

    #[test]
    fn fast_origin_matches_operator() {
        let g = build_green(7, 3, 0.2).unwrap();
        assert!((green_origin_fast(7, 3, 0.2) - g.origin()).abs() < 1e-13);
        let rows = green_origin_scaling(1, 1.0, 1.0, &[4.0, 8.0]).unwrap();
        assert_eq!(rows[1].n, 8);
        assert!(green_origin_scaling(1, 1.0, 1.0, &[8.0, 4.0]).is_err());
        assert!(green_origin_scaling(1, 1.0, 0.1, &[4.0]).is_err());
        let csv = scaling_csv(&rows).render();
        assert!(csv.starts_with("alpha,N,lambda,green00\n"));
    }
}
