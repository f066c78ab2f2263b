//! Centred Gaussian fields with covariance `G_{N,λ}` and the Monte Carlo
//! checks built on them: the Eisenbaum isomorphism and Gaussian tail bounds.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::gamma;

use crate::error::{invalid, Result};
use crate::green_torus::GreenOperator;
use crate::lattice_walk::torus_occupation;
use crate::ldp::stats::{par_chunks, MeanEstimate};
use crate::rng::{derive_seed, stream};
use crate::torus::TorusShape;

/// One realisation `Z` on the torus, tagged with the `(N, d, λ)` of the
/// Green operator it was drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianField {
    pub n: usize,
    pub d: usize,
    pub lambda: f64,
    pub values: Vec<f64>,
}

/// Spectral sampler `Z = Σ_k (λ + μ_k)^{-1/2} ξ_k ψ_k`, with `ψ_k` the real
/// orthonormal Fourier basis (cosine/sine pairs of conjugate modes).
#[derive(Debug, Clone)]
pub struct FieldSampler {
    shape: TorusShape,
    lambda: f64,
    /// Row-major `V x V`; column `j` is the scaled basis vector of mode `j`.
    factor: Vec<f64>,
}

impl FieldSampler {
    pub fn new(green: &GreenOperator) -> Self {
        let shape = green.shape();
        let v = shape.volume();
        let n = shape.n as f64;
        let norm = (v as f64).powf(-0.5);
        let mut factor = vec![0.0; v * v];
        let mut k = vec![0; shape.d];
        let mut x = vec![0; shape.d];
        let mut neg = vec![0; shape.d];
        for mode in 0..v {
            shape.coords(mode, &mut k);
            neg.iter_mut()
                .zip(&k)
                .for_each(|(m, &c)| *m = (shape.n - c) % shape.n);
            let partner = shape.index(&neg);
            let scale = (green.lambda() + green.spectrum()[mode]).powf(-0.5);
            // self-conjugate modes carry a cosine; a conjugate pair (k, -k)
            // carries cosine on the smaller index and sine on the larger
            let (weight, use_sine) = if partner == mode {
                (norm, false)
            } else {
                (std::f64::consts::SQRT_2 * norm, mode > partner)
            };
            for site in 0..v {
                shape.coords(site, &mut x);
                let phase: usize = k.iter().zip(&x).map(|(a, b)| a * b).sum();
                let angle = 2.0 * PI * phase as f64 / n;
                let basis = if use_sine { angle.sin() } else { angle.cos() };
                factor[site * v + mode] = scale * weight * basis;
            }
        }
        Self {
            shape,
            lambda: green.lambda(),
            factor,
        }
    }

    pub fn shape(&self) -> TorusShape {
        self.shape
    }

    /// `Σ_j factor(x,j) factor(y,j)`, which must reproduce `G(x, y)`.
    pub fn implied_covariance(&self, x: usize, y: usize) -> f64 {
        let v = self.shape.volume();
        (0..v)
            .map(|j| self.factor[x * v + j] * self.factor[y * v + j])
            .sum()
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, xi: &mut [f64], out: &mut [f64]) {
        let v = self.shape.volume();
        for z in xi.iter_mut() {
            *z = rng.sample(StandardNormal);
        }
        for (site, o) in out.iter_mut().enumerate() {
            let row = &self.factor[site * v..(site + 1) * v];
            *o = row.iter().zip(xi.iter()).map(|(a, b)| a * b).sum();
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GaussianField {
        let v = self.shape.volume();
        let mut xi = vec![0.0; v];
        let mut values = vec![0.0; v];
        self.sample_into(rng, &mut xi, &mut values);
        GaussianField {
            n: self.shape.n,
            d: self.shape.d,
            lambda: self.lambda,
            values,
        }
    }
}

pub fn sample_field<R: Rng + ?Sized>(green: &GreenOperator, rng: &mut R) -> GaussianField {
    FieldSampler::new(green).sample(rng)
}

/// `N_{2p}(Z) = (Σ_x |Z_x|^{2p})^{1/2p}`.
pub fn norm_2p(values: &[f64], p: f64) -> Result<f64> {
    if !(p > 1.0) {
        return Err(invalid(format!("p must be > 1, got {p}")));
    }
    let r = 2.0 * p;
    Ok(values.iter().map(|z| z.abs().powf(r)).sum::<f64>().powf(1.0 / r))
}

/// Bounded functionals of a torus field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Functional {
    Constant,
    /// `min(S_site, clip)`.
    ClippedSite { site: usize, clip: f64 },
    /// `min(Σ_x S_x^2, clip)`.
    ClippedSquareSum { clip: f64 },
    /// `1{N_{2p}(S) >= threshold}`.
    NormIndicator { p: f64, threshold: f64 },
}

impl Functional {
    pub fn eval(&self, s: &[f64]) -> f64 {
        match *self {
            Functional::Constant => 1.0,
            Functional::ClippedSite { site, clip } => s[site].min(clip),
            Functional::ClippedSquareSum { clip } => s.iter().map(|x| x * x).sum::<f64>().min(clip),
            Functional::NormIndicator { p, threshold } => {
                let r = 2.0 * p;
                let norm = s.iter().map(|x| x.abs().powf(r)).sum::<f64>().powf(1.0 / r);
                if norm >= threshold {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Clipping level recorded in reports; `None` for unclipped functionals.
    pub fn clip(&self) -> Option<f64> {
        match *self {
            Functional::ClippedSite { clip, .. } | Functional::ClippedSquareSum { clip } => Some(clip),
            _ => None,
        }
    }
}

/// Per-functional outcome of an Eisenbaum check, also the JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EisenbaumReport {
    pub n: usize,
    pub d: usize,
    pub lambda: f64,
    pub shift: f64,
    pub functional: Functional,
    pub clip: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub se_lhs: f64,
    pub se_rhs: f64,
    pub n_samples: u64,
    pub seed: u64,
    /// `|lhs - rhs|` in units of the combined standard error.
    pub z_score: f64,
    pub verdict: bool,
}

impl EisenbaumReport {
    pub fn combined_se(&self) -> f64 {
        self.se_lhs.hypot(self.se_rhs)
    }
}

/// Monte Carlo estimates of both sides of
/// `E[F(l_τ + ½(Z+s)^2)] = E[F(½(Z+s)^2)(1 + Z_0/s)]`,
/// sharing samples across `functionals`. The two sides use independent
/// stream families, so their standard errors combine in quadrature.
pub fn eisenbaum_check_many(
    green: &GreenOperator,
    shift: f64,
    functionals: &[Functional],
    n_samples: u64,
    seed: u64,
) -> Result<Vec<EisenbaumReport>> {
    if shift == 0.0 || !shift.is_finite() {
        return Err(invalid("shift s must be finite and nonzero"));
    }
    if n_samples < 2 {
        return Err(invalid("need at least two samples"));
    }
    let sampler = FieldSampler::new(green);
    let shape = green.shape();
    let lambda = green.lambda();
    let v = shape.volume();
    let m = functionals.len();
    let lhs_seed = derive_seed(seed, 1);
    let rhs_seed = derive_seed(seed, 2);
    let holding = rand_distr::Exp::new(lambda).expect("positive rate");

    let chunks = par_chunks(n_samples, |range| {
        let mut lhs = vec![MeanEstimate::default(); m];
        let mut rhs = vec![MeanEstimate::default(); m];
        let (mut xi, mut z, mut s) = (vec![0.0; v], vec![0.0; v], vec![0.0; v]);
        for i in range {
            // left side: walk stopped at Exp(λ) plus an independent field
            let mut rng = stream(lhs_seed, i);
            let tau: f64 = rng.sample(holding);
            let local = torus_occupation(shape, tau, &mut rng);
            sampler.sample_into(&mut rng, &mut xi, &mut z);
            for x in 0..v {
                s[x] = local[x] + 0.5 * (z[x] + shift).powi(2);
            }
            for (acc, f) in lhs.iter_mut().zip(functionals) {
                acc.push(f.eval(&s));
            }
            // right side: squared shifted field weighted by 1 + Z_0/s
            let mut rng = stream(rhs_seed, i);
            sampler.sample_into(&mut rng, &mut xi, &mut z);
            for x in 0..v {
                s[x] = 0.5 * (z[x] + shift).powi(2);
            }
            let weight = 1.0 + z[0] / shift;
            for (acc, f) in rhs.iter_mut().zip(functionals) {
                acc.push(f.eval(&s) * weight);
            }
        }
        (lhs, rhs)
    });
    let mut sums = (vec![MeanEstimate::default(); m], vec![MeanEstimate::default(); m]);
    for (l, r) in &chunks {
        sums.0.iter_mut().zip(l).for_each(|(a, b)| a.merge(b));
        sums.1.iter_mut().zip(r).for_each(|(a, b)| a.merge(b));
    }

    Ok(functionals
        .iter()
        .zip(sums.0.iter().zip(&sums.1))
        .map(|(f, (l, r))| {
            let (lhs, rhs) = (l.mean(), r.mean());
            let (se_lhs, se_rhs) = (l.standard_error(), r.standard_error());
            let se = se_lhs.hypot(se_rhs);
            let z_score = if se > 0.0 {
                (lhs - rhs).abs() / se
            } else if lhs == rhs {
                0.0
            } else {
                f64::INFINITY
            };
            EisenbaumReport {
                n: shape.n,
                d: shape.d,
                lambda,
                shift,
                functional: *f,
                clip: f.clip(),
                lhs,
                rhs,
                se_lhs,
                se_rhs,
                n_samples,
                seed,
                z_score,
                verdict: z_score <= 4.0,
            }
        })
        .collect())
}

pub fn eisenbaum_check(
    green: &GreenOperator,
    shift: f64,
    functional: Functional,
    n_samples: u64,
    seed: u64,
) -> Result<EisenbaumReport> {
    Ok(eisenbaum_check_many(green, shift, &[functional], n_samples, seed)?.remove(0))
}

/// Samples of `N_{2p}(S)` with `S = l_τ + ½(Z+s)^2`, used to place
/// indicator thresholds at empirical quantiles.
pub fn lhs_norm_samples(
    green: &GreenOperator,
    shift: f64,
    p: f64,
    n_samples: u64,
    seed: u64,
) -> Vec<f64> {
    let sampler = FieldSampler::new(green);
    let shape = green.shape();
    let holding = rand_distr::Exp::new(green.lambda()).expect("positive rate");
    let v = shape.volume();
    (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i);
            let tau: f64 = rng.sample(holding);
            let local = torus_occupation(shape, tau, &mut rng);
            let mut xi = vec![0.0; v];
            let mut z = vec![0.0; v];
            sampler.sample_into(&mut rng, &mut xi, &mut z);
            let s: Vec<f64> = (0..v).map(|x| local[x] + 0.5 * (z[x] + shift).powi(2)).collect();
            norm_2p(&s, p).expect("p > 1")
        })
        .collect()
}

/// Empirical quantile by sorting (lower order statistic).
pub fn empirical_quantile(samples: &[f64], level: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let idx = ((level * sorted.len() as f64).floor() as usize).min(sorted.len() - 1);
    sorted[idx]
}

/// `E|Y|^{2p} = 2^p Γ(p + ½)/√π` for a standard normal `Y`.
pub fn gaussian_abs_moment(two_p: f64) -> f64 {
    let p = two_p / 2.0;
    2f64.powf(p) * gamma(p + 0.5) / PI.sqrt()
}

/// Lower bound `(1/(x√2π))(1 - 1/x^2) exp(-x^2/2)` on `P(N_{2p}(Z) >= √u)`
/// with `x^2 = u ρ₁`.
pub fn tail_lower_bound(u: f64, rho1: f64) -> f64 {
    let x2 = u * rho1;
    if x2 <= 0.0 {
        return 1.0;
    }
    (1.0 / (x2.sqrt() * (2.0 * PI).sqrt())) * (1.0 - 1.0 / x2) * (-0.5 * x2).exp()
}

/// Concentration bound `2 P(Y >= (√u - M)/√ρ₂)` around the median `M`,
/// with `ρ₂ = 1/ρ₁`; `None` when `√u <= M` (the bound says nothing).
pub fn tail_upper_bound(u: f64, median: f64, rho1: f64) -> Option<f64> {
    let gap = u.sqrt() - median;
    if gap <= 0.0 {
        return None;
    }
    let normal = Normal::standard();
    Some((2.0 * normal.sf(gap * rho1.sqrt())).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailBoundReport {
    pub n: usize,
    pub d: usize,
    pub lambda: f64,
    pub p: f64,
    pub rho1: f64,
    /// The level `u`; the event is `N_{2p}(Z) >= √u`.
    pub level: f64,
    pub hits: u64,
    pub n_samples: u64,
    pub probability: f64,
    pub se: f64,
    pub lower_bound: f64,
    pub median: f64,
    pub upper_bound: Option<f64>,
    /// `M^2` versus `2^{1/p} (E|Y|^{2p})^{1/p} V^{1/p} G(0,0)`.
    pub median_sq: f64,
    pub median_sq_bound: f64,
    pub lower_ok: Option<bool>,
    pub upper_ok: Option<bool>,
}

impl TailBoundReport {
    /// `Some(true)` when every decidable check passed, `None` if nothing
    /// could be decided.
    pub fn verdict(&self) -> Option<bool> {
        match (self.lower_ok, self.upper_ok) {
            (None, None) => None,
            (a, b) => Some(a.unwrap_or(true) && b.unwrap_or(true) && self.median_sq <= self.median_sq_bound),
        }
    }
}

/// Samples of `N_{2p}(Z)` for `Z ~ N(0, G)`.
pub fn field_norm_samples(green: &GreenOperator, p: f64, n_samples: u64, seed: u64) -> Vec<f64> {
    let sampler = FieldSampler::new(green);
    let v = green.volume();
    (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i);
            let mut xi = vec![0.0; v];
            let mut z = vec![0.0; v];
            sampler.sample_into(&mut rng, &mut xi, &mut z);
            norm_2p(&z, p).expect("p > 1")
        })
        .collect()
}

/// Compares the MC probability of `N_{2p}(Z) >= √level` with the analytic
/// lower bound and the median-concentration upper bound. Zero hits leave the
/// lower-bound check undecided rather than failed.
pub fn tail_bound_check_level(
    green: &GreenOperator,
    p: f64,
    level: f64,
    rho1: f64,
    n_samples: u64,
    seed: u64,
) -> Result<TailBoundReport> {
    if !(p > 1.0) || !(rho1 > 0.0) || !(level >= 0.0) {
        return Err(invalid("need p > 1, rho1 > 0, level >= 0"));
    }
    let norms = field_norm_samples(green, p, n_samples, seed);
    let threshold = level.sqrt();
    let hits = norms.iter().filter(|&&x| x >= threshold).count() as u64;
    let n = n_samples as f64;
    let probability = hits as f64 / n;
    let se = (probability * (1.0 - probability) / n).sqrt();
    let median = empirical_quantile(&norms, 0.5);
    let lower_bound = tail_lower_bound(level, rho1);
    let upper_bound = tail_upper_bound(level, median, rho1);
    let lower_ok = if lower_bound <= 0.0 || hits > 0 {
        Some(lower_bound <= probability + 4.0 * se)
    } else {
        None
    };
    let upper_ok = upper_bound.map(|ub| probability - 4.0 * se <= ub);
    let v = green.volume() as f64;
    let median_sq_bound = 2f64.powf(1.0 / p)
        * gaussian_abs_moment(2.0 * p).powf(1.0 / p)
        * v.powf(1.0 / p)
        * green.origin();
    Ok(TailBoundReport {
        n: green.n(),
        d: green.d(),
        lambda: green.lambda(),
        p,
        rho1,
        level,
        hits,
        n_samples,
        probability,
        se,
        lower_bound,
        median,
        upper_bound,
        median_sq: median * median,
        median_sq_bound,
        lower_ok,
        upper_ok,
    })
}

/// The level is `t r_t ε` from the schedule.
pub fn tail_bound_check(
    green: &GreenOperator,
    scaling: &crate::params::ScalingSchedule,
    params: &crate::params::ProblemParams,
    epsilon: f64,
    rho1: f64,
    n_samples: u64,
    seed: u64,
) -> Result<TailBoundReport> {
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon must be > 0"));
    }
    tail_bound_check_level(green, params.p(), scaling.t * scaling.r_t * epsilon, rho1, n_samples, seed)
}
