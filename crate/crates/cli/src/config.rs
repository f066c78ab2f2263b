//! Per-subcommand parameter blocks. Each is a flat JSON object; missing
//! fields take the defaults below and unknown fields are rejected.

use serde::{Deserialize, Serialize};
use siltlab_core::gauss_field::Functional;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreenScaling {
    pub d: usize,
    pub a: f64,
    pub radius: f64,
    pub alphas: Vec<f64>,
}

impl Default for GreenScaling {
    fn default() -> Self {
        Self {
            d: 1,
            a: 1.0,
            radius: 1.0,
            alphas: vec![16.0, 32.0, 64.0, 128.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NashCheck {
    pub n: usize,
    pub d: usize,
    pub s_grid: Vec<f64>,
}

impl Default for NashCheck {
    fn default() -> Self {
        Self {
            n: 16,
            d: 1,
            s_grid: vec![0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Lattice {
    pub n: usize,
    pub d: usize,
    pub lambda: f64,
    pub p: f64,
    pub tol: Option<f64>,
}

impl Default for Lattice {
    fn default() -> Self {
        Self {
            n: 8,
            d: 1,
            lambda: 1.0,
            p: 2.0,
            tol: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RhoContinuum {
    pub a: f64,
    pub d: usize,
    pub p: f64,
    pub radius: f64,
    pub mesh: f64,
    pub tol: f64,
}

impl Default for RhoContinuum {
    fn default() -> Self {
        Self {
            a: 1.0,
            d: 1,
            p: 2.0,
            radius: 8.0,
            mesh: 0.05,
            tol: 1e-7,
        }
    }
}

/// Shared by `chi` and `gn-constant`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Continuum {
    pub d: usize,
    pub p: f64,
    pub radius: f64,
    pub mesh: f64,
    pub tol: f64,
}

impl Default for Continuum {
    fn default() -> Self {
        Self {
            d: 1,
            p: 2.0,
            radius: 8.0,
            mesh: 0.05,
            tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpCheck {
    pub n: usize,
    pub d: usize,
    pub alpha: f64,
    pub p: f64,
    pub count: u64,
    pub radius: f64,
    pub epsilon: f64,
}

impl Default for InterpCheck {
    fn default() -> Self {
        Self {
            n: 6,
            d: 2,
            alpha: 2.0,
            p: 2.0,
            count: 100,
            radius: 4.0,
            epsilon: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceStudy {
    pub a: f64,
    pub d: usize,
    pub p: f64,
    /// `(N, alpha)` pairs.
    pub grids: Vec<(usize, f64)>,
    pub tol: f64,
}

impl Default for ConvergenceStudy {
    fn default() -> Self {
        Self {
            a: 1.0,
            d: 1,
            p: 2.0,
            grids: vec![(8, 1.0), (16, 2.0), (32, 4.0), (64, 8.0)],
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeA {
    pub d: usize,
    pub p: f64,
    pub radius: f64,
    pub mesh: f64,
    pub a_grid: Vec<f64>,
    pub tol: f64,
}

impl Default for OptimizeA {
    fn default() -> Self {
        Self {
            d: 1,
            p: 2.0,
            radius: 8.0,
            mesh: 0.05,
            a_grid: vec![2.0, 3.0, 4.5, 6.0, 9.0],
            tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EisenbaumCheck {
    pub n: usize,
    pub d: usize,
    pub lambda: f64,
    pub shift: f64,
    pub n_samples: u64,
    /// Defaults to a clipped site value, a clipped square sum and a norm
    /// indicator at the median.
    pub functionals: Option<Vec<Functional>>,
}

impl Default for EisenbaumCheck {
    fn default() -> Self {
        Self {
            n: 2,
            d: 1,
            lambda: 1.0,
            shift: 1.0,
            n_samples: 100_000,
            functionals: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailBounds {
    pub n: usize,
    pub d: usize,
    pub lambda: f64,
    pub p: f64,
    pub levels: Vec<f64>,
    pub n_samples: u64,
}

impl Default for TailBounds {
    fn default() -> Self {
        Self {
            n: 8,
            d: 1,
            lambda: 0.5,
            p: 2.0,
            levels: vec![1.0, 4.0, 9.0, 16.0, 25.0],
            n_samples: 100_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McTail {
    pub d: usize,
    pub p: f64,
    pub t_grid: Vec<f64>,
    /// `r_t = c t^{-theta}`.
    pub c: f64,
    pub theta: f64,
    pub n_samples: u64,
    pub window_slack: f64,
}

impl Default for McTail {
    fn default() -> Self {
        Self {
            d: 1,
            p: 2.0,
            t_grid: vec![4.0, 8.0, 12.0, 16.0, 20.0, 24.0],
            c: 1.0,
            theta: 0.2,
            n_samples: 100_000,
            window_slack: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateExtract {
    /// Path to an `mc-tail.json` record.
    pub record: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoldCheck {
    pub d: usize,
    pub p: f64,
    pub a: f64,
    pub radius: f64,
    pub t: f64,
    pub r_t: f64,
    pub n_samples: u64,
}

impl Default for FoldCheck {
    fn default() -> Self {
        Self {
            d: 1,
            p: 2.0,
            a: 1.0,
            radius: 2.0,
            t: 8.0,
            r_t: 0.5,
            n_samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Confine {
    pub d: usize,
    pub p: f64,
    pub r_ball: f64,
    pub t: f64,
    pub n_samples: u64,
}

impl Default for Confine {
    fn default() -> Self {
        Self {
            d: 1,
            p: 2.0,
            r_ball: 2.0,
            t: 8.0,
            n_samples: 10_000,
        }
    }
}
