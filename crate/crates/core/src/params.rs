//! Problem parameters and the scale schedule.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Dimension `d` and exponent `p`; the conjugate exponent `q = p/(p-1)` is
/// always derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    d: usize,
    p: f64,
}

impl ProblemParams {
    pub fn new(d: usize, p: f64) -> Result<Self> {
        if d == 0 {
            return Err(invalid("dimension must be >= 1"));
        }
        if !(p.is_finite() && p > 1.0) {
            return Err(invalid(format!("p must be > 1, got {p}")));
        }
        Ok(Self { d, p })
    }

    /// Like [`ProblemParams::new`] but also rejects non-subcritical pairs.
    pub fn subcritical(d: usize, p: f64) -> Result<Self> {
        let params = Self::new(d, p)?;
        if !params.is_subcritical() {
            return Err(Error::Regime { d, p });
        }
        Ok(params)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        conjugate(self.p)
    }

    /// `p(d-2) < d`, equivalently `d(p-1)/p < 2`.
    pub fn is_subcritical(&self) -> bool {
        self.p * (self.d as f64 - 2.0) < self.d as f64
    }

    /// `d/q`, the exponent governing the discrete-to-continuum scaling.
    pub fn d_over_q(&self) -> f64 {
        self.d as f64 / self.q()
    }
}

/// `p/(p-1)`.
pub fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

/// The scales `(a, R, t, r_t)` and the derived `alpha_t = r_t^{-q/d}`,
/// `lambda_t = a alpha_t^{-2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingSchedule {
    pub a: f64,
    pub radius: f64,
    pub t: f64,
    pub r_t: f64,
    pub alpha_t: f64,
    pub lambda_t: f64,
}

impl ScalingSchedule {
    pub fn new(params: &ProblemParams, a: f64, radius: f64, t: f64, r_t: f64) -> Result<Self> {
        for (name, v) in [("a", a), ("R", radius), ("t", t)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(r_t > 0.0 && r_t < 1.0) {
            return Err(invalid(format!("r_t must lie in (0,1), got {r_t}")));
        }
        let alpha_t = r_t.powf(-params.q() / params.d() as f64);
        let lambda_t = a * alpha_t.powi(-2);
        Ok(Self {
            a,
            radius,
            t,
            r_t,
            alpha_t,
            lambda_t,
        })
    }

    /// Torus side `R alpha_t` rounded to the nearest integer.
    pub fn torus_side(&self) -> usize {
        (self.radius * self.alpha_t).round().max(1.0) as usize
    }

    /// Checks `lower(t) * slack < r_t < 1 / slack` for the dimension's window.
    pub fn validate_window(&self, params: &ProblemParams, slack: f64) -> Result<()> {
        validate_window(params, self.t, self.r_t, slack)
    }
}

/// Lower edge of the admissible `r_t` window at time `t`:
/// `t^{-1/2q}` (d=1), `(log t / t)^{1/q}` (d=2), `t^{-1/q}` (d>=3).
pub fn window_lower_edge(params: &ProblemParams, t: f64) -> f64 {
    let q = params.q();
    match params.d() {
        1 => t.powf(-1.0 / (2.0 * q)),
        2 => (t.ln().max(0.0) / t).powf(1.0 / q),
        _ => t.powf(-1.0 / q),
    }
}

/// The `<<` relations are checked as strict inequalities after multiplying
/// the small side by `slack >= 1`.
pub fn validate_window(params: &ProblemParams, t: f64, r_t: f64, slack: f64) -> Result<()> {
    if !(slack >= 1.0) {
        return Err(invalid(format!("slack must be >= 1, got {slack}")));
    }
    let lower = window_lower_edge(params, t);
    if !(lower * slack < r_t) {
        return Err(Error::ScaleWindow(format!(
            "r_t={r_t} not above {slack}*{lower} at t={t} (d={})",
            params.d()
        )));
    }
    if !(r_t * slack < 1.0) {
        return Err(Error::ScaleWindow(format!(
            "r_t={r_t} not below 1/{slack} at t={t}"
        )));
    }
    Ok(())
}
