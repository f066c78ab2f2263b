//! Projected gradient descent on a norm sphere.
//!
//! The constrained problem `min E(h)` subject to `C(h) = 1`, with `E`
//! homogeneous of degree `k` and `C` a norm, is solved as the unconstrained
//! minimisation of the scale-invariant quotient `Q(h) = E(h) / C(h)^k`:
//! each iterate takes a (preconditioned) gradient step on `Q`, is projected
//! onto the linear constraints of the problem, and is renormalised onto the
//! sphere. Step lengths come from Barzilai-Borwein with Armijo backtracking.

use serde::{Deserialize, Serialize};

/// An energy and a norm defining a sphere-constrained problem.
pub trait SphereObjective: Sync {
    fn len(&self) -> usize;

    /// `E(h)`; writes `∇E(h)` into `grad`.
    fn energy(&self, h: &[f64], grad: &mut [f64]) -> f64;

    /// Homogeneity degree of `E`.
    fn degree(&self) -> f64;

    /// `C(h)`; writes `∇C(h)` into `grad`.
    fn norm(&self, h: &[f64], grad: &mut [f64]) -> f64;

    /// Applies an approximate inverse Hessian. Must be symmetric positive
    /// definite.
    fn precondition(&self, g: &[f64], out: &mut [f64]) {
        out.copy_from_slice(g);
    }

    /// Enforces linear constraints (e.g. Dirichlet boundary values) in place.
    fn project(&self, _h: &mut [f64]) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub armijo: f64,
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 100_000,
            armijo: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Descent {
    pub value: f64,
    pub point: Vec<f64>,
    pub iterations: usize,
    /// Preconditioned norm of the quotient gradient at the final point.
    pub residual: f64,
    pub converged: bool,
    pub constraint_violation: f64,
}

struct State {
    h: Vec<f64>,
    value: f64,
    grad: Vec<f64>,
    pgrad: Vec<f64>,
}

fn normalise<O: SphereObjective>(obj: &O, h: &mut [f64], scratch: &mut [f64]) -> bool {
    obj.project(h);
    let c = obj.norm(h, scratch);
    if !(c.is_finite() && c > 0.0) {
        return false;
    }
    h.iter_mut().for_each(|x| *x /= c);
    true
}

/// Quotient value and gradient at a point with `C(h) = 1`.
fn evaluate<O: SphereObjective>(obj: &O, h: Vec<f64>) -> State {
    let n = obj.len();
    let mut grad = vec![0.0; n];
    let mut cgrad = vec![0.0; n];
    let value = obj.energy(&h, &mut grad);
    let c = obj.norm(&h, &mut cgrad);
    let k = obj.degree();
    let scale = c.powf(-k);
    for (g, cg) in grad.iter_mut().zip(&cgrad) {
        *g = scale * (*g - k * value / c * cg);
    }
    obj.project(&mut grad);
    let mut pgrad = vec![0.0; n];
    obj.precondition(&grad, &mut pgrad);
    obj.project(&mut pgrad);
    State {
        h,
        value: value * scale,
        grad,
        pgrad,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn minimize_on_sphere<O: SphereObjective>(
    obj: &O,
    start: Vec<f64>,
    opts: &SolverOptions,
) -> Descent {
    let n = obj.len();
    assert_eq!(start.len(), n);
    let mut scratch = vec![0.0; n];
    let mut h = start;
    if !normalise(obj, &mut h, &mut scratch) {
        return Descent {
            value: f64::NAN,
            point: h,
            iterations: 0,
            residual: f64::INFINITY,
            converged: false,
            constraint_violation: f64::INFINITY,
        };
    }
    let mut state = evaluate(obj, h);
    let mut step = 1.0;
    let mut rel_decrease = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let noise = 16.0 * f64::EPSILON;
    while iterations < opts.max_iter {
        let slope = dot(&state.grad, &state.pgrad).max(0.0);
        let gnorm = slope.sqrt();
        let small_gradient = gnorm <= opts.tol * (1.0 + state.value.abs());
        if small_gradient && (rel_decrease < opts.tol || gnorm == 0.0) {
            converged = true;
            break;
        }
        iterations += 1;
        let mut accepted = None;
        let mut eta = step;
        for _ in 0..60 {
            let mut trial: Vec<f64> = state
                .h
                .iter()
                .zip(&state.pgrad)
                .map(|(x, g)| x - eta * g)
                .collect();
            if normalise(obj, &mut trial, &mut scratch) {
                let e = obj.energy(&trial, &mut scratch);
                if e.is_finite()
                    && e <= state.value - opts.armijo * eta * slope + noise * state.value.abs()
                {
                    accepted = Some(trial);
                    break;
                }
            }
            eta *= 0.5;
        }
        let Some(trial) = accepted else {
            // no representable decrease along the descent direction
            converged = small_gradient;
            break;
        };
        let next = evaluate(obj, trial);
        rel_decrease = (state.value - next.value) / state.value.abs().max(f64::MIN_POSITIVE);
        // Barzilai-Borwein step in the preconditioned metric
        let s: Vec<f64> = next.h.iter().zip(&state.h).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next.grad.iter().zip(&state.grad).map(|(a, b)| a - b).collect();
        let py: Vec<f64> = next.pgrad.iter().zip(&state.pgrad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let ypy = dot(&y, &py);
        step = if sy > 0.0 && ypy > 0.0 {
            (sy / ypy).clamp(1e-12, 1e12)
        } else {
            (eta * 2.0).min(1e12)
        };
        state = next;
    }
    let residual = dot(&state.grad, &state.pgrad).max(0.0).sqrt();
    let constraint_violation = (obj.norm(&state.h, &mut scratch) - 1.0).abs();
    Descent {
        value: state.value,
        point: state.h,
        iterations,
        residual,
        converged,
        constraint_violation,
    }
}
