//! Discrete and continuum constrained energies.
//!
//! Every problem is a minimization (or, for `ρ₂`, a maximization) of a
//! homogeneous energy on a norm sphere. Results carry the minimizer, the
//! iteration count, the first-order residual and a convergence flag.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::table::{num, CsvTable};

mod continuum;
mod convergence;
mod interpolation;
mod lattice;
mod mesh;
pub mod optimizer;
mod spectral;

pub use continuum::{
    beta_phi, beta_star, gagliardo_nirenberg_constant, gn_quotient, optimize_a, solve_chi,
    solve_chi_with, solve_rho_continuum, solve_rho_continuum_with, AOptimum, ContinuumOptions,
};
pub use convergence::{convergence_csv, convergence_study, convergence_study_with, ConvergenceRow};
pub use interpolation::{interpolate_to_continuum, truncate, TruncatedFunction, TruncationReport};
pub use lattice::{
    solve_lattice_energy, solve_rho1, solve_rho2, solve_rho2_with, AscentOptions,
    LatticeFunction, LatticeOptions, LatticeProblem,
};
pub use mesh::{Boundary, ContinuumFunction};

/// Gradient weight for which `λN₂²(h) + w N₂²(∇̃h) = <h, (λ - Δ)h>` with the
/// rate-`2d` generator; the one that makes `ρ₁ ρ₂ = 1`.
pub const WALK_GRADIENT_WEIGHT: f64 = 1.0;

/// Gradient weight of the continuum functionals `ρ(a)` and `χ_{d,p}`.
pub const HALF_GRADIENT_WEIGHT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Minimizer {
    Lattice(LatticeFunction),
    Continuum(ContinuumFunction),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizerResult {
    pub value: f64,
    pub minimizer: Minimizer,
    pub iterations: usize,
    /// Preconditioned first-order residual, relative to `1 + |value|`.
    pub residual: f64,
    pub converged: bool,
    pub constraint_violation: f64,
    /// Index of the winning start.
    pub best_start: usize,
    pub diagnostics: BTreeMap<String, f64>,
}

impl MinimizerResult {
    pub(crate) fn exact(value: f64, minimizer: Minimizer) -> Self {
        Self {
            value,
            minimizer,
            iterations: 0,
            residual: 0.0,
            converged: true,
            constraint_violation: 0.0,
            best_start: 0,
            diagnostics: BTreeMap::new(),
        }
    }

    pub(crate) fn from_descent(run: &optimizer::Descent, minimizer: Minimizer) -> Self {
        Self {
            value: run.value,
            minimizer,
            iterations: run.iterations,
            residual: run.residual / (1.0 + run.value.abs()),
            converged: run.converged,
            constraint_violation: run.constraint_violation,
            best_start: 0,
            diagnostics: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("minimizer results serialize")
    }

    pub fn lattice(&self) -> Option<&LatticeFunction> {
        match &self.minimizer {
            Minimizer::Lattice(h) => Some(h),
            Minimizer::Continuum(_) => None,
        }
    }

    pub fn continuum(&self) -> Option<&ContinuumFunction> {
        match &self.minimizer {
            Minimizer::Continuum(g) => Some(g),
            Minimizer::Lattice(_) => None,
        }
    }
}

/// One study row per result: grid parameters first, then
/// `value,residual,iterations,converged`.
pub fn results_csv(param_names: &[&str], rows: &[(Vec<f64>, &MinimizerResult)]) -> CsvTable {
    let mut header: Vec<&str> = param_names.to_vec();
    header.extend(["value", "residual", "iterations", "converged"]);
    let mut table = CsvTable::new(&header);
    for (params, r) in rows {
        let mut row: Vec<String> = params.iter().map(|x| num(*x)).collect();
        row.push(num(r.value));
        row.push(num(r.residual));
        row.push(r.iterations.to_string());
        row.push(r.converged.to_string());
        table.push(row);
    }
    table
}
