//! Lattice to continuum: piecewise-linear interpolation on Kuhn simplices
//! and the product with the boundary cutoff `Ψ_R`.

use serde::{Deserialize, Serialize};

use super::lattice::LatticeFunction;
use super::mesh::{permutations, Boundary, ContinuumFunction, QuadRule};
use crate::error::{invalid, Result};

/// `g(x) = α^{d/2p} ĥ(αx)`, with `ĥ` the Kuhn-simplex interpolation of `h`;
/// `g` has period `N/α`.
pub fn interpolate_to_continuum(h: &LatticeFunction, alpha: f64, p: f64) -> Result<ContinuumFunction> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(invalid(format!("alpha must be > 0, got {alpha}")));
    }
    if !(p > 1.0) {
        return Err(invalid(format!("p must be > 1, got {p}")));
    }
    let scale = alpha.powf(h.d as f64 / (2.0 * p));
    ContinuumFunction::periodic(
        h.d,
        h.n,
        1.0 / alpha,
        0.0,
        h.values.iter().map(|v| scale * v).collect(),
    )
}

/// `ψ_R` per axis: 1 on `[-R + R^ε, R - R^ε]`, 0 outside `[-R, R]`, linear
/// in between.
fn psi(s: f64, radius: f64, shell: f64) -> (f64, f64) {
    let a = s.abs();
    if a >= radius {
        (0.0, 0.0)
    } else if a <= radius - shell {
        (1.0, 0.0)
    } else {
        ((radius - a) / shell, -s.signum() / shell)
    }
}

/// Simplex vertices with the value of the linear function there.
type Piece = Vec<(Vec<f64>, f64)>;

/// Cuts a simplex by the hyperplane `x_axis = c` into simplices lying on
/// one side each, splitting along one crossing edge at a time.
fn split(piece: Piece, axis: usize, c: f64, scale: f64) -> Vec<Piece> {
    let tol = 1e-12 * scale;
    let side = |v: &(Vec<f64>, f64)| {
        let s = v.0[axis] - c;
        if s > tol {
            1
        } else if s < -tol {
            -1
        } else {
            0
        }
    };
    let signs: Vec<i32> = piece.iter().map(side).collect();
    let crossing = (0..piece.len())
        .flat_map(|a| (0..piece.len()).map(move |b| (a, b)))
        .find(|&(a, b)| signs[a] == 1 && signs[b] == -1);
    let Some((a, b)) = crossing else {
        return vec![piece];
    };
    let (va, vb) = (&piece[a], &piece[b]);
    let t = (c - va.0[axis]) / (vb.0[axis] - va.0[axis]);
    let mut m: Vec<f64> = va.0.iter().zip(&vb.0).map(|(p, q)| p + t * (q - p)).collect();
    m[axis] = c;
    let mid = (m, va.1 + t * (vb.1 - va.1));
    let mut first = piece.clone();
    first[b] = mid.clone();
    let mut second = piece;
    second[a] = mid;
    let mut out = split(first, axis, c, scale);
    out.extend(split(second, axis, c, scale));
    out
}

/// `|det(v_j - v_{j-1})|`, the factor mapping the reference Kuhn simplex
/// onto the piece.
fn path_volume(piece: &Piece) -> f64 {
    let d = piece.len() - 1;
    let mut m: Vec<Vec<f64>> = (1..=d)
        .map(|j| (0..d).map(|i| piece[j].0[i] - piece[j - 1].0[i]).collect())
        .collect();
    let mut det = 1.0;
    for col in 0..d {
        let pivot = (col..d).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs())).unwrap();
        if m[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            m.swap(pivot, col);
            det = -det;
        }
        det *= m[col][col];
        for r in col + 1..d {
            let factor = m[r][col] / m[col][col];
            for k in col..d {
                m[r][k] -= factor * m[col][k];
            }
        }
    }
    det.abs()
}

/// `g Ψ_R` for a continuum function `g`, kept in factored form: the product
/// is not piecewise linear on the grid of `g`, so its norms are computed by
/// quadrature of the exact product over the simplices of `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedFunction {
    pub g: ContinuumFunction,
    pub radius: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    /// `‖∇(gΨ)‖₂²`.
    pub lhs: f64,
    /// `(1 + R^{-ε})‖∇g‖² + 2R^{-ε}‖g‖²`, norms over `[-R, R]^d`.
    pub rhs: f64,
    pub gradient_window: f64,
    pub mass_window: f64,
    pub holds: bool,
    /// Relative change of `lhs` between two quadrature orders.
    pub quadrature_error: f64,
}

pub fn truncate(g: &ContinuumFunction, radius: f64, epsilon: f64) -> Result<TruncatedFunction> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(radius > 1.0 && radius.is_finite()) {
        return Err(invalid(format!("R must be > 1, got {radius}")));
    }
    Ok(TruncatedFunction {
        g: g.clone(),
        radius,
        epsilon,
    })
}

impl TruncatedFunction {
    fn shell(&self) -> f64 {
        self.radius.powf(self.epsilon)
    }

    pub fn psi(&self, x: &[f64]) -> f64 {
        x.iter().map(|&s| psi(s, self.radius, self.shell()).0).product()
    }

    pub fn value_at(&self, x: &[f64]) -> f64 {
        self.g.value_at(x) * self.psi(x)
    }

    /// Sums `f(g, ∇g, Ψ, ∇Ψ)` over `[-R, R]^d`. Every simplex of `g` is cut
    /// along the kinks of `Ψ`, so the integrand is polynomial on each piece
    /// and the collapsed rule of `order` points per axis integrates
    /// polynomials of total degree `2 order - d` exactly.
    fn integrate(&self, order: usize, f: impl Fn(f64, &[f64], f64, &[f64]) -> f64) -> f64 {
        let g = &self.g;
        let d = g.d;
        let h = g.spacing;
        let n = g.nodes as i64;
        let rule = QuadRule::new(d, order);
        let shell = self.shell();
        let cuts = [-self.radius, -self.radius + shell, self.radius - shell, self.radius];
        let lo = ((-self.radius - g.origin) / h).floor() as i64;
        let hi = ((self.radius - g.origin) / h).ceil() as i64;
        let span = (hi - lo) as usize;
        let perms = permutations(d);
        let node_value = |k: &[i64]| -> f64 {
            let mut idx = 0usize;
            for &ki in k {
                let c = match g.boundary {
                    Boundary::Periodic => ki.rem_euclid(n),
                    Boundary::Dirichlet => {
                        if ki < 0 || ki >= n {
                            return 0.0;
                        }
                        ki
                    }
                };
                idx = idx * g.nodes + c as usize;
            }
            g.values[idx]
        };
        let mut total = 0.0;
        let mut cell = vec![0i64; d];
        let mut grad_g = vec![0.0; d];
        let mut grad_psi = vec![0.0; d];
        let mut x = vec![0.0; d];
        let mut lattice = vec![vec![0i64; d]; d + 1];
        for flat in 0..span.pow(d as u32) {
            let mut rest = flat;
            for slot in cell.iter_mut().rev() {
                *slot = lo + (rest % span) as i64;
                rest /= span;
            }
            for perm in &perms {
                lattice[0].copy_from_slice(&cell);
                for (j, &axis) in perm.iter().enumerate() {
                    let mut v = lattice[j].clone();
                    v[axis] += 1;
                    lattice[j + 1] = v;
                }
                let vals: Vec<f64> = lattice.iter().map(|k| node_value(k)).collect();
                for (j, &axis) in perm.iter().enumerate() {
                    grad_g[axis] = (vals[j + 1] - vals[j]) / h;
                }
                let piece: Piece = lattice
                    .iter()
                    .zip(&vals)
                    .map(|(k, &v)| (k.iter().map(|&ki| g.origin + ki as f64 * h).collect(), v))
                    .collect();
                let mut pieces = vec![piece];
                for axis in 0..d {
                    for &c in &cuts {
                        pieces = pieces.into_iter().flat_map(|pc| split(pc, axis, c, h)).collect();
                    }
                }
                for pc in &pieces {
                    let centre: Vec<f64> = (0..d).map(|i| pc.iter().map(|v| v.0[i]).sum::<f64>() / (d + 1) as f64).collect();
                    if centre.iter().any(|c| c.abs() > self.radius) {
                        continue;
                    }
                    let jac = path_volume(pc);
                    if jac == 0.0 {
                        continue;
                    }
                    for (b, w) in rule.bary.iter().zip(&rule.weights) {
                        for (i, xi) in x.iter_mut().enumerate() {
                            *xi = (0..=d).map(|j| b[j] * pc[j].0[i]).sum();
                        }
                        let gv: f64 = (0..=d).map(|j| b[j] * pc[j].1).sum();
                        let parts: Vec<(f64, f64)> = x.iter().map(|&s| psi(s, self.radius, shell)).collect();
                        let ps: f64 = parts.iter().map(|t| t.0).product();
                        for (i, gp) in grad_psi.iter_mut().enumerate() {
                            *gp = parts
                                .iter()
                                .enumerate()
                                .map(|(j, t)| if j == i { t.1 } else { t.0 })
                                .product();
                        }
                        total += w * jac * f(gv, &grad_g, ps, &grad_psi);
                    }
                }
            }
        }
        total
    }

    const ORDER: usize = 8;

    /// `‖g Ψ‖_r`.
    pub fn norm(&self, r: f64) -> f64 {
        self.integrate(Self::ORDER, |g, _, ps, _| (g * ps).abs().powf(r))
            .powf(1.0 / r)
    }

    /// `‖g‖_r` over `[-R, R]^d`.
    pub fn window_norm(&self, r: f64) -> f64 {
        self.integrate(Self::ORDER, |g, _, _, _| g.abs().powf(r))
            .powf(1.0 / r)
    }

    fn gradient_energy_order(&self, order: usize) -> f64 {
        self.integrate(order, |g, dg, ps, dps| {
            dg.iter().zip(dps).map(|(a, b)| (ps * a + g * b).powi(2)).sum()
        })
    }

    /// `‖∇(g Ψ)‖₂²`.
    pub fn gradient_energy(&self) -> f64 {
        self.gradient_energy_order(Self::ORDER)
    }

    /// Checks `‖∇(gΨ)‖² ≤ (1 + R^{-ε})‖∇g‖² + 2R^{-ε}‖g‖²`.
    pub fn energy_bound(&self) -> TruncationReport {
        let lhs = self.gradient_energy();
        let finer = self.gradient_energy_order(2 * Self::ORDER);
        let gradient_window = self.integrate(Self::ORDER, |_, dg, _, _| dg.iter().map(|a| a * a).sum());
        let mass_window = self.integrate(Self::ORDER, |g, _, _, _| g * g);
        let c = self.radius.powf(-self.epsilon);
        let rhs = (1.0 + c) * gradient_window + 2.0 * c * mass_window;
        TruncationReport {
            lhs,
            rhs,
            gradient_window,
            mass_window,
            holds: lhs <= rhs,
            quadrature_error: (lhs - finer).abs() / finer.abs().max(f64::MIN_POSITIVE),
        }
    }
}
