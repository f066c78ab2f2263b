//! Continuous piecewise-linear functions on the Kuhn triangulation of a
//! regular grid.
//!
//! Each grid cell `k + [0, h]^d` splits into `d!` simplices, one per
//! permutation `σ`, with vertices `k, k + e_σ(1), ..., k + e_σ(1) + ... +
//! e_σ(d)` (in units of `h`). Quadratic integrals are exact per simplex;
//! `∫|g|^r` uses a collapsed Gauss-Legendre rule.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Zero on the boundary of the cube spanned by the nodes.
    Dirichlet,
    /// Period `nodes * spacing` along every axis.
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuumFunction {
    pub d: usize,
    /// Nodes per axis.
    pub nodes: usize,
    pub spacing: f64,
    /// Coordinate of node 0 on every axis.
    pub origin: f64,
    pub boundary: Boundary,
    /// Node values, axis 0 slowest.
    pub values: Vec<f64>,
}

impl ContinuumFunction {
    /// Samples `f` on `[-R, R]^d` with zero boundary values. The number of
    /// cells per axis is `round(2R / mesh)`, so the grid covers the cube
    /// exactly with a spacing within rounding of `mesh`.
    pub fn on_cube(d: usize, radius: f64, mesh: f64, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        if d == 0 {
            return Err(invalid("dimension must be >= 1"));
        }
        if !(radius > 0.0 && mesh > 0.0 && radius.is_finite() && mesh.is_finite()) {
            return Err(invalid("radius and mesh must be positive"));
        }
        let cells = (2.0 * radius / mesh).round().max(2.0) as usize;
        let mut g = Self {
            d,
            nodes: cells + 1,
            spacing: 2.0 * radius / cells as f64,
            origin: -radius,
            boundary: Boundary::Dirichlet,
            values: Vec::new(),
        };
        g.values = g.sample(f);
        Ok(g)
    }

    pub fn periodic(d: usize, nodes: usize, spacing: f64, origin: f64, values: Vec<f64>) -> Result<Self> {
        if d == 0 || nodes == 0 || !(spacing > 0.0) {
            return Err(invalid("periodic grid needs d, nodes >= 1 and spacing > 0"));
        }
        if values.len() != nodes.pow(d as u32) {
            return Err(invalid("value count does not match the grid"));
        }
        Ok(Self {
            d,
            nodes,
            spacing,
            origin,
            boundary: Boundary::Periodic,
            values,
        })
    }

    /// Evaluates `f` at every node, enforcing zero Dirichlet boundary values.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let mut x = vec![0.0; self.d];
        (0..self.len())
            .map(|i| {
                if self.on_boundary(i) {
                    return 0.0;
                }
                self.position(i, &mut x);
                f(&x)
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Side length of the domain (cube or period cell).
    pub fn extent(&self) -> f64 {
        match self.boundary {
            Boundary::Dirichlet => (self.nodes - 1) as f64 * self.spacing,
            Boundary::Periodic => self.nodes as f64 * self.spacing,
        }
    }

    pub fn centre(&self) -> f64 {
        match self.boundary {
            Boundary::Dirichlet => self.origin + 0.5 * self.extent(),
            Boundary::Periodic => self.origin + 0.5 * (self.extent() - self.spacing),
        }
    }

    pub(crate) fn coords(&self, mut idx: usize, out: &mut [usize]) {
        for slot in out.iter_mut().rev() {
            *slot = idx % self.nodes;
            idx /= self.nodes;
        }
    }

    pub(crate) fn index(&self, coords: &[usize]) -> usize {
        coords.iter().fold(0, |acc, &c| acc * self.nodes + c)
    }

    pub fn position(&self, idx: usize, out: &mut [f64]) {
        let mut c = vec![0; self.d];
        self.coords(idx, &mut c);
        for (o, ci) in out.iter_mut().zip(c) {
            *o = self.origin + ci as f64 * self.spacing;
        }
    }

    pub(crate) fn on_boundary(&self, idx: usize) -> bool {
        if self.boundary == Boundary::Periodic {
            return false;
        }
        let mut rest = idx;
        for _ in 0..self.d {
            let c = rest % self.nodes;
            rest /= self.nodes;
            if c == 0 || c + 1 == self.nodes {
                return true;
            }
        }
        false
    }

    /// `g(x)`; zero outside the cube for Dirichlet grids.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.d);
        let n = self.nodes;
        let mut base = vec![0usize; self.d];
        let mut frac = vec![0.0; self.d];
        for i in 0..self.d {
            let s = (x[i] - self.origin) / self.spacing;
            match self.boundary {
                Boundary::Dirichlet => {
                    let top = (n - 1) as f64;
                    if !(0.0..=top).contains(&s) {
                        return 0.0;
                    }
                    let k = (s.floor() as usize).min(n - 2);
                    base[i] = k;
                    frac[i] = s - k as f64;
                }
                Boundary::Periodic => {
                    let s = s.rem_euclid(n as f64);
                    let k = (s.floor() as usize).min(n - 1);
                    base[i] = k;
                    frac[i] = s - k as f64;
                }
            }
        }
        let mut order: Vec<usize> = (0..self.d).collect();
        order.sort_by(|&a, &b| frac[b].total_cmp(&frac[a]).then(a.cmp(&b)));
        let mut vertex = base.clone();
        let mut acc = (1.0 - frac[order[0]]) * self.values[self.index(&vertex)];
        for j in 0..self.d {
            let axis = order[j];
            vertex[axis] = (vertex[axis] + 1) % n;
            let next = if j + 1 < self.d { frac[order[j + 1]] } else { 0.0 };
            acc += (frac[axis] - next) * self.values[self.index(&vertex)];
        }
        acc
    }

    /// Same function sampled on another grid.
    pub fn resample(&self, nodes: usize, spacing: f64, origin: f64) -> Self {
        let mut out = Self {
            d: self.d,
            nodes,
            spacing,
            origin,
            boundary: self.boundary,
            values: Vec::new(),
        };
        out.values = out.sample(|x| self.value_at(x));
        out
    }

    /// `x ↦ c · g(β x)`, exact for piecewise-linear functions.
    pub fn dilate(&self, beta: f64, amplitude: f64) -> Self {
        Self {
            spacing: self.spacing / beta,
            origin: self.origin / beta,
            values: self.values.iter().map(|v| amplitude * v).collect(),
            ..self.clone()
        }
    }

    pub fn abs(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| v.abs()).collect(),
            ..self.clone()
        }
    }

    pub(crate) fn mesh(&self) -> Mesh {
        Mesh::new(self)
    }

    /// `‖g‖₂²`, exact.
    pub fn mass(&self) -> f64 {
        self.mesh().mass(&self.values, None)
    }

    /// `‖∇g‖₂²`, exact.
    pub fn gradient_energy(&self) -> f64 {
        self.mesh().gradient_energy(&self.values, None)
    }

    /// `∫|g|^r` with the default rule for `r`.
    pub fn integral_pow(&self, r: f64) -> f64 {
        let rule = QuadRule::for_power(self.d, r);
        self.mesh().integral_pow(&self.values, r, &rule, None)
    }

    pub fn norm(&self, r: f64) -> f64 {
        if r == 2.0 {
            return self.mass().sqrt();
        }
        self.integral_pow(r).powf(1.0 / r)
    }

    /// `|∫|g|^r (n+1 points) - ∫|g|^r (n points)|`, relative.
    pub fn quadrature_error(&self, r: f64) -> f64 {
        let mesh = self.mesh();
        let rule = QuadRule::for_power(self.d, r);
        let finer = QuadRule::new(self.d, rule.order + 1);
        let a = mesh.integral_pow(&self.values, r, &rule, None);
        let b = mesh.integral_pow(&self.values, r, &finer, None);
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    /// Share of `Σ g²` over nodes with some coordinate in the outer
    /// `shell` fraction of the half-width.
    pub fn boundary_mass(&self, shell: f64) -> f64 {
        let half = 0.5 * self.extent();
        let centre = self.centre();
        let mut x = vec![0.0; self.d];
        let (mut outer, mut total) = (0.0, 0.0);
        for (i, v) in self.values.iter().enumerate() {
            self.position(i, &mut x);
            let w = v * v;
            total += w;
            if x.iter().any(|xi| (xi - centre).abs() > (1.0 - shell) * half) {
                outer += w;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            outer / total
        }
    }
}

pub(crate) fn permutations(d: usize) -> Vec<Vec<usize>> {
    if d == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in permutations(d - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, d - 1);
            out.push(p);
        }
    }
    out.sort();
    out
}

fn factorial(d: usize) -> f64 {
    (1..=d).map(|k| k as f64).product()
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = 0.5 * (1.0 - z);
        w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Barycentric points (path-vertex order) and weights on the reference Kuhn
/// simplex `1 ≥ t₁ ≥ ... ≥ t_d ≥ 0`, of volume `1/d!`.
#[derive(Debug, Clone)]
pub(crate) struct QuadRule {
    pub order: usize,
    pub bary: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    /// Collapsed tensor rule `t_i = u₁ ⋯ u_i` with `n` points per axis.
    pub fn new(d: usize, n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        let total = n.pow(d as u32);
        let mut bary = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0; d];
        for flat in 0..total {
            let mut rest = flat;
            for slot in idx.iter_mut() {
                *slot = rest % n;
                rest /= n;
            }
            let mut t = vec![0.0; d + 2];
            t[0] = 1.0;
            let mut weight = 1.0;
            for i in 0..d {
                t[i + 1] = t[i] * x[idx[i]];
                weight *= w[idx[i]] * x[idx[i]].powi((d - 1 - i) as i32);
            }
            bary.push((0..=d).map(|j| t[j] - t[j + 1]).collect());
            weights.push(weight);
        }
        Self {
            order: n,
            bary,
            weights,
        }
    }

    /// Exact for `|g|^r` with integer `r` on simplices where `g` keeps one
    /// sign (always, for even `r`); two extra points for fractional `r`.
    pub fn for_power(d: usize, r: f64) -> Self {
        let base = (((r + d as f64) / 2.0).ceil() as usize).max(1);
        Self::new(d, if r.fract() == 0.0 { base } else { base + 2 })
    }
}

fn abs_pow(x: f64, r: f64) -> f64 {
    let a = x.abs();
    if r == 2.0 {
        a * a
    } else if r.fract() == 0.0 && r < 32.0 {
        a.powi(r as i32)
    } else {
        a.powf(r)
    }
}

/// Simplex connectivity of a grid.
#[derive(Debug, Clone)]
pub(crate) struct Mesh {
    pub d: usize,
    pub spacing: f64,
    /// `d + 1` node indices per simplex, path order.
    pub simplices: Vec<usize>,
}

impl Mesh {
    pub fn new(g: &ContinuumFunction) -> Self {
        let d = g.d;
        let n = g.nodes;
        let per_axis = match g.boundary {
            Boundary::Dirichlet => n - 1,
            Boundary::Periodic => n,
        };
        let perms = permutations(d);
        let cells = per_axis.pow(d as u32);
        let mut simplices = Vec::with_capacity(cells * perms.len() * (d + 1));
        let mut base = vec![0; d];
        for cell in 0..cells {
            let mut rest = cell;
            for slot in base.iter_mut().rev() {
                *slot = rest % per_axis;
                rest /= per_axis;
            }
            for perm in &perms {
                let mut v = base.clone();
                simplices.push(g.index(&v));
                for &axis in perm {
                    v[axis] = (v[axis] + 1) % n;
                    simplices.push(g.index(&v));
                }
            }
        }
        Self {
            d,
            spacing: g.spacing,
            simplices,
        }
    }

    fn volume(&self) -> f64 {
        self.spacing.powi(self.d as i32) / factorial(self.d)
    }

    /// `∫ g²`; accumulates its gradient into `grad`.
    pub fn mass(&self, v: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let k = self.d + 1;
        let c = self.volume() / ((self.d + 1) * (self.d + 2)) as f64;
        let mut acc = 0.0;
        for s in self.simplices.chunks_exact(k) {
            let (mut sq, mut sum) = (0.0, 0.0);
            for &i in s {
                sq += v[i] * v[i];
                sum += v[i];
            }
            acc += c * (sq + sum * sum);
            if let Some(g) = grad.as_deref_mut() {
                for &i in s {
                    g[i] += 2.0 * c * (v[i] + sum);
                }
            }
        }
        acc
    }

    /// `∫ |∇g|²`; the gradient is `(v_i - v_{i-1}) / h` along `e_σ(i)`.
    pub fn gradient_energy(&self, v: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let k = self.d + 1;
        let c = self.volume() / (self.spacing * self.spacing);
        let mut acc = 0.0;
        for s in self.simplices.chunks_exact(k) {
            for j in 1..k {
                let diff = v[s[j]] - v[s[j - 1]];
                acc += c * diff * diff;
                if let Some(g) = grad.as_deref_mut() {
                    g[s[j]] += 2.0 * c * diff;
                    g[s[j - 1]] -= 2.0 * c * diff;
                }
            }
        }
        acc
    }

    /// `∫ |g|^r` by `rule`; accumulates its gradient into `grad`.
    pub fn integral_pow(&self, v: &[f64], r: f64, rule: &QuadRule, mut grad: Option<&mut [f64]>) -> f64 {
        let k = self.d + 1;
        let scale = self.spacing.powi(self.d as i32);
        let mut acc = 0.0;
        for s in self.simplices.chunks_exact(k) {
            for (b, w) in rule.bary.iter().zip(&rule.weights) {
                let g: f64 = s.iter().zip(b).map(|(&i, bj)| bj * v[i]).sum();
                let gp = abs_pow(g, r);
                acc += w * gp;
                if let Some(out) = grad.as_deref_mut() {
                    if g != 0.0 {
                        let dg = scale * w * r * gp / g;
                        for (&i, bj) in s.iter().zip(b) {
                            out[i] += dg * bj;
                        }
                    }
                }
            }
        }
        acc * scale
    }
}
