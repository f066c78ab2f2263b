//! Continuum problems on `ℝ^d`, approximated on `[-R, R]^d` with zero
//! boundary values:
//!
//! * `ρ(a) = inf { a‖h‖₂² + ½‖∇h‖₂² : ‖h‖_{2p} = 1 }`
//! * `χ_{d,p} = inf { ½‖∇g‖₂² : ‖g‖₂ = ‖g‖_{2p} = 1 }`
//! * `K_{d,p} = sup ‖g‖_{2p} / (‖∇g‖₂^{d/2q} ‖g‖₂^{1-d/2q})`
//!
//! Each solve doubles `R` until the outer shell carries a negligible share
//! of `‖h‖₂²`, then repeats on the halved mesh and extrapolates.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::lattice::run_starts;
use super::mesh::{ContinuumFunction, Mesh, QuadRule};
use super::optimizer::{Descent, SolverOptions, SphereObjective};
use super::spectral::{AxisKind, SeparableSpectrum};
use super::{Minimizer, MinimizerResult, HALF_GRADIENT_WEIGHT};
use crate::error::{invalid, Error, Result};
use crate::params::ProblemParams;
use crate::rng;

/// Outer shell used by the boundary-mass diagnostic, as a fraction of `R`.
const SHELL: f64 = 0.1;
/// Largest trusted boundary-mass share.
const BOUNDARY_MASS_LIMIT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuumOptions {
    pub solver: SolverOptions,
    pub seed: u64,
    /// Times `R` may be doubled before giving up on the boundary diagnostic.
    pub max_doublings: usize,
    /// Solve again on the halved mesh and extrapolate.
    pub extrapolate: bool,
    pub warm_start: Option<ContinuumFunction>,
}

impl ContinuumOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            solver: SolverOptions::with_tol(tol),
            ..Self::default()
        }
    }
}

impl Default for ContinuumOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::with_tol(1e-7),
            seed: 0,
            max_doublings: 4,
            extrapolate: true,
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Energy {
    /// `a M + w D`.
    Rho { a: f64, w: f64 },
    /// `w M^{k/2} D`, `k = 4q/d - 2`.
    Chi { w: f64, k: f64 },
    /// `D^s M^{1-s}`, `s = d/2q`.
    Gn { s: f64 },
}

impl Energy {
    fn degree(&self) -> f64 {
        match *self {
            Energy::Rho { .. } | Energy::Gn { .. } => 2.0,
            Energy::Chi { k, .. } => k + 2.0,
        }
    }
}

struct ContinuumObjective {
    energy: Energy,
    p: f64,
    mesh: Mesh,
    rule: QuadRule,
    boundary: Vec<bool>,
    interior: Vec<usize>,
    spectrum: SeparableSpectrum,
    sigma: f64,
    w: f64,
}

impl ContinuumObjective {
    fn new(energy: Energy, p: f64, grid: &ContinuumFunction, width: f64) -> Self {
        let boundary: Vec<bool> = (0..grid.len()).map(|i| grid.on_boundary(i)).collect();
        let interior = (0..grid.len()).filter(|&i| !boundary[i]).collect();
        let h = grid.spacing;
        let dd = grid.d as i32;
        // (σ M_lumped + w D)^{-1} with M_lumped = h^d and D = h^{d-2}(-Δ)
        let (sigma, w) = match energy {
            Energy::Rho { a, w } => (a, w),
            _ => (1.0 / (width * width), 1.0),
        };
        Self {
            energy,
            p,
            mesh: grid.mesh(),
            rule: QuadRule::for_power(grid.d, 2.0 * p),
            boundary,
            interior,
            spectrum: SeparableSpectrum::new(AxisKind::Dirichlet, grid.nodes - 2, grid.d),
            sigma: sigma * h.powi(dd),
            w: w * h.powi(dd - 2),
        }
    }
}

impl SphereObjective for ContinuumObjective {
    fn len(&self) -> usize {
        self.boundary.len()
    }

    fn energy(&self, h: &[f64], grad: &mut [f64]) -> f64 {
        let n = h.len();
        let mut gm = vec![0.0; n];
        let mut gd = vec![0.0; n];
        let m = self.mesh.mass(h, Some(&mut gm));
        let dr = self.mesh.gradient_energy(h, Some(&mut gd));
        let (e, cm, cd) = match self.energy {
            Energy::Rho { a, w } => (a * m + w * dr, a, w),
            Energy::Chi { w, k } => {
                let mk = m.powf(0.5 * k);
                (w * mk * dr, w * 0.5 * k * mk / m * dr, w * mk)
            }
            Energy::Gn { s } => {
                let e = dr.powf(s) * m.powf(1.0 - s);
                (e, e * (1.0 - s) / m, e * s / dr)
            }
        };
        for i in 0..n {
            grad[i] = cm * gm[i] + cd * gd[i];
        }
        e
    }

    fn degree(&self) -> f64 {
        self.energy.degree()
    }

    fn norm(&self, h: &[f64], grad: &mut [f64]) -> f64 {
        let r = 2.0 * self.p;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let total = self.mesh.integral_pow(h, r, &self.rule, Some(grad));
        let c = total.powf(1.0 / r);
        let scale = 1.0 / (r * c.powf(r - 1.0));
        grad.iter_mut().for_each(|g| *g *= scale);
        c
    }

    fn precondition(&self, g: &[f64], out: &mut [f64]) {
        let packed: Vec<f64> = self.interior.iter().map(|&i| g[i]).collect();
        let sol = self.spectrum.solve(self.sigma, self.w, &packed);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (&i, v) in self.interior.iter().zip(sol) {
            out[i] = v;
        }
    }

    fn project(&self, h: &mut [f64]) {
        for (x, &b) in h.iter_mut().zip(&self.boundary) {
            if b {
                *x = 0.0;
            }
        }
    }
}

fn continuum_starts(
    grid: &ContinuumFunction,
    width: f64,
    seed: u64,
    warm: Option<&ContinuumFunction>,
    refine_only: bool,
) -> Vec<Vec<f64>> {
    if let (Some(w), true) = (warm, refine_only) {
        return vec![grid.sample(|x| w.value_at(x))];
    }
    let bump = |s: f64| grid.sample(|x| (-x.iter().map(|v| v * v).sum::<f64>() / (2.0 * s * s)).exp());
    let mut starts = vec![bump(width), bump(0.5 * width), bump(2.0 * width)];
    let mut rng = rng::stream(seed, 0);
    let noisy: Vec<f64> = bump(width)
        .into_iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v * (1.0 + 0.3 * z)
        })
        .collect();
    starts.push(noisy);
    if let Some(w) = warm {
        starts.push(grid.sample(|x| w.value_at(x)));
    }
    starts
}

#[derive(Clone)]
struct GridSolve {
    run: Descent,
    best_start: usize,
    minimizer: ContinuumFunction,
}

fn solve_grid(
    energy: Energy,
    p: f64,
    grid: &ContinuumFunction,
    width: f64,
    warm: Option<&ContinuumFunction>,
    refine_only: bool,
    opts: &ContinuumOptions,
) -> GridSolve {
    let obj = ContinuumObjective::new(energy, p, grid, width);
    let starts = continuum_starts(grid, width, opts.seed, warm, refine_only);
    let (best_start, run) = run_starts(&obj, starts, &opts.solver);
    let minimizer = ContinuumFunction {
        values: run.point.iter().map(|v| v.abs()).collect(),
        ..grid.clone()
    };
    GridSolve {
        run,
        best_start,
        minimizer,
    }
}

/// Doubles `R` until the boundary diagnostic passes, then (optionally)
/// halves the mesh and extrapolates `(4 v_{h/2} - v_h) / 3`.
fn solve_adaptive(
    energy: Energy,
    params: &ProblemParams,
    radius: f64,
    mesh: f64,
    width: f64,
    opts: &ContinuumOptions,
) -> Result<MinimizerResult> {
    if !(radius > 0.0 && mesh > 0.0 && mesh < radius) {
        return Err(invalid(format!("need 0 < mesh < R, got R={radius}, mesh={mesh}")));
    }
    let (d, p) = (params.d(), params.p());
    let mut radius = radius;
    let mut warm = opts.warm_start.clone();
    let mut doublings = 0;
    let coarse = loop {
        let grid = ContinuumFunction::on_cube(d, radius, mesh, |_| 0.0)?;
        let solve = solve_grid(energy, p, &grid, width, warm.as_ref(), false, opts);
        let shell = solve.minimizer.boundary_mass(SHELL);
        if shell < BOUNDARY_MASS_LIMIT || doublings == opts.max_doublings {
            break (solve, shell);
        }
        warm = Some(solve.minimizer);
        radius *= 2.0;
        doublings += 1;
    };
    let (coarse, shell) = coarse;
    let (fine, value) = if opts.extrapolate {
        let g = &coarse.minimizer;
        let grid = ContinuumFunction::on_cube(d, radius, 0.5 * g.spacing, |_| 0.0)?;
        // the halved mesh refines the coarse minimizer; no fresh starts
        let fine = solve_grid(energy, p, &grid, width, Some(g), true, opts);
        let v = (4.0 * fine.run.value - coarse.run.value) / 3.0;
        (fine, v)
    } else {
        let v = coarse.run.value;
        (coarse.clone(), v)
    };
    let mut result = MinimizerResult::from_descent(&fine.run, Minimizer::Continuum(fine.minimizer.clone()));
    result.value = value;
    result.best_start = fine.best_start;
    result.converged = fine.run.converged && coarse.run.converged;
    let diag = &mut result.diagnostics;
    diag.insert("value_coarse".into(), coarse.run.value);
    diag.insert("value_fine".into(), fine.run.value);
    diag.insert("radius".into(), radius);
    diag.insert("mesh".into(), fine.minimizer.spacing);
    diag.insert("boundary_mass".into(), shell.max(fine.minimizer.boundary_mass(SHELL)));
    diag.insert("doublings".into(), doublings as f64);
    diag.insert("quadrature_error".into(), fine.minimizer.quadrature_error(2.0 * p));
    if shell >= BOUNDARY_MASS_LIMIT {
        result.converged = false;
    }
    Ok(result)
}

pub fn solve_rho_continuum_with(
    a: f64,
    d: usize,
    p: f64,
    radius: f64,
    mesh: f64,
    weight: f64,
    opts: &ContinuumOptions,
) -> Result<MinimizerResult> {
    let params = ProblemParams::subcritical(d, p)?;
    if !(a.is_finite() && a > 0.0) {
        return Err(invalid(format!("a must be > 0, got {a}")));
    }
    let width = (weight / a).sqrt();
    let mut r = solve_adaptive(Energy::Rho { a, w: weight }, &params, radius, mesh, width, opts)?;
    r.diagnostics.insert("a".into(), a);
    Ok(r)
}

/// `ρ(a) = inf { a‖h‖₂² + ½‖∇h‖₂² : ‖h‖_{2p} = 1 }`.
pub fn solve_rho_continuum(a: f64, d: usize, p: f64, radius: f64, mesh: f64, tol: f64) -> Result<MinimizerResult> {
    solve_rho_continuum_with(a, d, p, radius, mesh, HALF_GRADIENT_WEIGHT, &ContinuumOptions::with_tol(tol))
}

pub fn solve_chi_with(d: usize, p: f64, radius: f64, mesh: f64, opts: &ContinuumOptions) -> Result<MinimizerResult> {
    let params = ProblemParams::subcritical(d, p)?;
    let k = 4.0 * params.q() / d as f64 - 2.0;
    let energy = Energy::Chi {
        w: HALF_GRADIENT_WEIGHT,
        k,
    };
    let mut result = solve_adaptive(energy, &params, radius, mesh, radius / 6.0, opts)?;
    // h_β(x) = β^{d/2p} h(βx) keeps ‖·‖_{2p} and scales ‖·‖₂ by β^{-d/2q}
    let Minimizer::Continuum(h) = &result.minimizer else {
        unreachable!()
    };
    let beta = h.mass().sqrt().powf(2.0 * params.q() / d as f64);
    let g = h.dilate(beta, beta.powf(d as f64 / (2.0 * p)));
    let diag = &mut result.diagnostics;
    diag.insert("beta".into(), beta);
    diag.insert("norm2".into(), g.mass().sqrt());
    diag.insert("norm2p".into(), g.norm(2.0 * p));
    diag.insert("half_gradient".into(), 0.5 * g.gradient_energy());
    result.constraint_violation = (g.mass().sqrt() - 1.0)
        .abs()
        .max((g.norm(2.0 * p) - 1.0).abs());
    result.minimizer = Minimizer::Continuum(g);
    Ok(result)
}

/// `χ_{d,p}` by minimizing `½‖h‖₂^{4q/d-2}‖∇h‖₂²` on `‖h‖_{2p} = 1`; the
/// minimizer is dilated so that both norms equal one.
pub fn solve_chi(d: usize, p: f64, radius: f64, mesh: f64, tol: f64) -> Result<MinimizerResult> {
    solve_chi_with(d, p, radius, mesh, &ContinuumOptions::with_tol(tol))
}

/// `‖g‖_{2p} / (‖∇g‖₂^{d/2q} ‖g‖₂^{1-d/2q})`.
pub fn gn_quotient(g: &ContinuumFunction, p: f64) -> f64 {
    let s = g.d as f64 * (1.0 - 1.0 / p) / 2.0;
    g.norm(2.0 * p) / (g.gradient_energy().sqrt().powf(s) * g.mass().sqrt().powf(1.0 - s))
}

/// `K_{d,p}` two ways: `(2χ)^{-d/4q}` from [`solve_chi`] (the value), and a
/// direct maximization of the quotient (diagnostic `k_direct`).
pub fn gagliardo_nirenberg_constant(d: usize, p: f64, radius: f64, mesh: f64, tol: f64) -> Result<MinimizerResult> {
    let params = ProblemParams::subcritical(d, p)?;
    let q = params.q();
    let opts = ContinuumOptions::with_tol(tol);
    let chi = solve_chi_with(d, p, radius, mesh, &opts)?;
    let k_chi = (2.0 * chi.value).powf(-(d as f64) / (4.0 * q));
    let s = d as f64 / (2.0 * q);
    let direct = solve_adaptive(Energy::Gn { s }, &params, radius, mesh, radius / 6.0, &opts)?;
    // the minimized energy is (‖∇g‖^{d/2q} ‖g‖₂^{1-d/2q})² at ‖g‖_{2p} = 1
    let k_direct = direct.value.powf(-0.5);
    let mut result = chi;
    result.value = k_chi;
    result.converged &= direct.converged;
    let diag = &mut result.diagnostics;
    diag.insert("chi".into(), (2.0f64).recip() * k_chi.powf(-4.0 * q / d as f64));
    diag.insert("k_direct".into(), k_direct);
    diag.insert("relative_gap".into(), (k_direct - k_chi).abs() / k_chi);
    Ok(result)
}

/// `β* = √(2ad / (2q - d)) · ‖h‖₂ / ‖∇h‖₂`.
pub fn beta_star(params: &ProblemParams, a: f64, mass: f64, gradient: f64) -> f64 {
    let d = params.d() as f64;
    (2.0 * a * d / (2.0 * params.q() - d)).sqrt() * (mass / gradient).sqrt()
}

/// `Φ_h(β) = a β^{-d/q} ‖h‖₂² + ½ β^{2-d/q} ‖∇h‖₂²`, the `ρ(a)` objective
/// at `h_β` given the squared norms of `h`.
pub fn beta_phi(params: &ProblemParams, a: f64, mass: f64, gradient: f64, beta: f64) -> f64 {
    let dq = params.d_over_q();
    a * beta.powf(-dq) * mass + 0.5 * beta.powf(2.0 - dq) * gradient
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AOptimum {
    /// `(a, ρ(a), a - ρ(a))` for every evaluated `a`, sorted by `a`.
    pub rows: Vec<(f64, f64, f64)>,
    pub a_star_grid: f64,
    /// `(2q - d)/d · χ`, from the χ minimizer.
    pub a_star_analytic: f64,
    pub inf_value: f64,
    pub chi: f64,
    /// `|inf + χ| / χ`.
    pub chi_check: f64,
    pub widened: usize,
}

/// Evaluates `a - ρ(a)` on `a_grid`, widening the grid geometrically while
/// the minimum sits on an edge, then refines with the vertex of the
/// parabola through the best point and its neighbours. `ρ(a)` is solved on
/// `[-R/√a, R/√a]^d` with mesh `mesh/√a`, the natural length scale of the
/// minimizer.
pub fn optimize_a(d: usize, p: f64, radius: f64, mesh: f64, a_grid: &[f64], tol: f64) -> Result<AOptimum> {
    let params = ProblemParams::subcritical(d, p)?;
    if a_grid.len() < 3 || a_grid.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
        return Err(invalid("a_grid needs at least three positive values"));
    }
    let opts = ContinuumOptions::with_tol(tol);
    let chi = solve_chi_with(d, p, radius, mesh, &opts)?;
    let a_star_analytic = (2.0 * params.q() - d as f64) / d as f64 * chi.value;
    let eval = |a: f64| -> Result<(f64, f64, f64)> {
        let s = a.sqrt();
        let r = solve_rho_continuum_with(a, d, p, radius / s, mesh / s, HALF_GRADIENT_WEIGHT, &opts)?;
        if !r.converged {
            return Err(Error::NonConvergence(format!("rho({a}) did not converge")));
        }
        Ok((a, r.value, a - r.value))
    };
    let mut rows = a_grid.iter().map(|&a| eval(a)).collect::<Result<Vec<_>>>()?;
    rows.sort_by(|x, y| x.0.total_cmp(&y.0));
    let argmin = |rows: &[(f64, f64, f64)]| {
        (0..rows.len())
            .min_by(|&i, &j| rows[i].2.total_cmp(&rows[j].2))
            .unwrap()
    };
    let mut widened = 0;
    loop {
        let i = argmin(&rows);
        if i != 0 && i + 1 != rows.len() {
            break;
        }
        if widened == 3 {
            return Err(Error::NonConvergence(
                "a grid does not bracket the minimum of a - rho(a)".into(),
            ));
        }
        let n = rows.len();
        let new_a = if i == 0 {
            rows[0].0 * rows[0].0 / rows[1].0
        } else {
            rows[n - 1].0 * rows[n - 1].0 / rows[n - 2].0
        };
        rows.push(eval(new_a)?);
        rows.sort_by(|x, y| x.0.total_cmp(&y.0));
        widened += 1;
    }
    let i = argmin(&rows);
    let a_star_grid = rows[i].0;
    let (x0, x1, x2) = (rows[i - 1].0, rows[i].0, rows[i + 1].0);
    let (f0, f1, f2) = (rows[i - 1].2, rows[i].2, rows[i + 1].2);
    let num = (x1 - x0).powi(2) * (f1 - f2) - (x1 - x2).powi(2) * (f1 - f0);
    let den = (x1 - x0) * (f1 - f2) - (x1 - x2) * (f1 - f0);
    if den != 0.0 {
        let vertex = x1 - 0.5 * num / den;
        if vertex > x0 && vertex < x2 && rows.iter().all(|r| r.0 != vertex) {
            rows.push(eval(vertex)?);
            rows.sort_by(|x, y| x.0.total_cmp(&y.0));
        }
    }
    let best = rows[argmin(&rows)];
    Ok(AOptimum {
        a_star_grid: if best.2 < rows[i].2 { best.0 } else { a_star_grid },
        a_star_analytic,
        inf_value: best.2,
        chi: chi.value,
        chi_check: (best.2 + chi.value).abs() / chi.value,
        widened,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `ρ(1)` for d = 1, p = 2: the ground state is a `sech`, and
    /// `ρ(a) = (4/3)(9/2)^{1/4} a^{3/4}`.
    fn rho_exact(a: f64) -> f64 {
        4.0 / 3.0 * 4.5f64.powf(0.25) * a.powf(0.75)
    }

    #[test]
    fn rho_one_dimensional_closed_form() {
        let r = solve_rho_continuum(1.0, 1, 2.0, 8.0, 0.1, 1e-8).unwrap();
        assert!(r.converged, "{:?}", r.diagnostics);
        assert!((r.value - rho_exact(1.0)).abs() < 1e-3 * rho_exact(1.0), "{}", r.value);
        assert!(r.diagnostics["boundary_mass"] < 1e-3);
        assert!(r.diagnostics["value_fine"] >= rho_exact(1.0) * (1.0 - 1e-9));
    }

    #[test]
    fn boundary_check_doubles_small_domains() {
        let r = solve_rho_continuum(1.0, 1, 2.0, 1.0, 0.05, 1e-7).unwrap();
        assert!(r.diagnostics["doublings"] >= 1.0, "{:?}", r.diagnostics);
        assert!(r.diagnostics["radius"] >= 2.0);
        assert!(r.diagnostics["boundary_mass"] < 1e-3);
    }

    #[test]
    fn rejects_supercritical_and_bad_domains() {
        assert!(matches!(solve_rho_continuum(1.0, 4, 2.0, 8.0, 0.5, 1e-7), Err(Error::Regime { .. })));
        assert!(solve_rho_continuum(1.0, 1, 2.0, 1.0, 2.0, 1e-7).is_err());
        assert!(solve_rho_continuum(0.0, 1, 2.0, 8.0, 0.1, 1e-7).is_err());
    }

    #[test]
    fn chi_one_dimensional_closed_form() {
        let r = solve_chi(1, 2.0, 8.0, 0.1, 1e-8).unwrap();
        assert!(r.converged);
        assert!((r.value - 1.5).abs() < 3e-3, "{}", r.value);
        assert!(r.constraint_violation < 1e-7);
    }

    #[test]
    fn beta_star_minimizes_phi() {
        let params = ProblemParams::new(1, 2.0).unwrap();
        let (m, g) = (0.8, 2.3);
        let b = beta_star(&params, 1.7, m, g);
        for k in 1..200 {
            let beta = 0.02 * k as f64;
            assert!(beta_phi(&params, 1.7, m, g, b) <= beta_phi(&params, 1.7, m, g, beta) * (1.0 + 1e-14));
        }
    }
}
