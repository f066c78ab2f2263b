//! Scaled discrete energies along a refinement schedule, against the
//! continuum limit `ρ(a)`.

use serde::{Deserialize, Serialize};

use super::continuum::{solve_rho_continuum_with, ContinuumOptions};
use super::interpolation::interpolate_to_continuum;
use super::lattice::{solve_lattice_energy, LatticeOptions, LatticeProblem};
use super::HALF_GRADIENT_WEIGHT;
use crate::error::{invalid, Result};
use crate::params::ProblemParams;
use crate::table::{num, CsvTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub alpha: f64,
    pub lambda: f64,
    /// `α^{2-d/q} ρ₁`, i.e. `a α^{-d/q} N₂²(h) + w α^{2-d/q} N₂²(∇̃h)`.
    pub scaled_value: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Relative defect of `‖∇g‖² = α^{2-d/q} N₂²(∇̃h)` on the minimizer.
    pub interpolation_defect: f64,
    pub limit: f64,
}

/// Solves `λ N₂²(h) + w N₂²(∇̃h)` on each `(N, α)` with `λ = a α^{-2}`,
/// warm-starting from the previous minimizer, and reports the scaled value
/// next to the continuum `ρ(a)` with the same weight.
pub fn convergence_study_with(
    a: f64,
    d: usize,
    p: f64,
    grids: &[(usize, f64)],
    weight: f64,
    tol: f64,
) -> Result<Vec<ConvergenceRow>> {
    let params = ProblemParams::subcritical(d, p)?;
    if grids.is_empty() {
        return Err(invalid("convergence study needs at least one grid"));
    }
    let limit_radius = 8.0 * (weight / a).sqrt();
    let limit = solve_rho_continuum_with(
        a,
        d,
        p,
        limit_radius,
        limit_radius / 40.0,
        weight,
        &ContinuumOptions::with_tol(tol.max(1e-9)),
    )?
    .value;
    let dq = params.d_over_q();
    let mut rows = Vec::with_capacity(grids.len());
    let mut previous: Option<(super::ContinuumFunction, f64)> = None;
    for &(n, alpha) in grids {
        if n < 2 || !(alpha > 0.0) {
            return Err(invalid(format!("grid ({n}, {alpha}) needs N >= 2 and alpha > 0")));
        }
        let lambda = a * alpha.powi(-2);
        let problem = LatticeProblem {
            n,
            d,
            lambda,
            p,
            weight,
        };
        let mut opts = LatticeOptions::with_tol(tol);
        if let Some((g, _)) = &previous {
            // sample the previous continuum profile at this grid, centred
            let centre = g.centre();
            let offset = (n / 2) as f64 / alpha;
            let shape = crate::torus::TorusShape::new(n, d);
            let mut c = vec![0; d];
            let scale = alpha.powf(-(d as f64) / (2.0 * p));
            opts.warm_start = Some(
                (0..shape.volume())
                    .map(|i| {
                        shape.coords(i, &mut c);
                        let x: Vec<f64> = c.iter().map(|&ci| ci as f64 / alpha - offset + centre).collect();
                        scale * g.value_at(&x)
                    })
                    .collect(),
            );
        }
        let r = solve_lattice_energy(&problem, &opts)?;
        let h = r.lattice().expect("lattice result").clone();
        let g = interpolate_to_continuum(&h, alpha, p)?;
        let want = alpha.powf(2.0 - dq) * h.gradient_energy();
        let got = g.gradient_energy();
        rows.push(ConvergenceRow {
            n,
            alpha,
            lambda,
            scaled_value: alpha.powf(2.0 - dq) * r.value,
            residual: r.residual,
            iterations: r.iterations,
            converged: r.converged,
            interpolation_defect: (got - want).abs() / want.max(f64::MIN_POSITIVE),
            limit,
        });
        previous = Some((recentre(&g), alpha));
    }
    Ok(rows)
}

/// Rolls a periodic function so its maximum sits at the middle node.
fn recentre(g: &super::ContinuumFunction) -> super::ContinuumFunction {
    let argmax = (0..g.values.len())
        .max_by(|&i, &j| g.values[i].total_cmp(&g.values[j]).then(j.cmp(&i)))
        .unwrap_or(0);
    let n = g.nodes;
    let mut from = vec![0; g.d];
    g.coords(argmax, &mut from);
    let mut out = g.clone();
    let mut c = vec![0; g.d];
    for i in 0..g.values.len() {
        g.coords(i, &mut c);
        let src: Vec<usize> = c
            .iter()
            .zip(&from)
            .map(|(&ci, &fi)| (ci + fi + n - n / 2) % n)
            .collect();
        out.values[i] = g.values[g.index(&src)];
    }
    out
}

/// [`convergence_study_with`] at the continuum weight `½`.
pub fn convergence_study(a: f64, d: usize, p: f64, grids: &[(usize, f64)], tol: f64) -> Result<Vec<ConvergenceRow>> {
    convergence_study_with(a, d, p, grids, HALF_GRADIENT_WEIGHT, tol)
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> CsvTable {
    let mut t = CsvTable::new(&[
        "N",
        "alpha",
        "lambda",
        "value",
        "residual",
        "iterations",
        "converged",
        "interpolation_defect",
        "limit",
    ]);
    for r in rows {
        t.push(vec![
            r.n.to_string(),
            num(r.alpha),
            num(r.lambda),
            num(r.scaled_value),
            num(r.residual),
            r.iterations.to_string(),
            r.converged.to_string(),
            num(r.interpolation_defect),
            num(r.limit),
        ]);
    }
    t
}
