//! The walk conditioned to stay in a Euclidean ball up to time `t`.
//!
//! Population Monte Carlo: `n` walkers run in stages of length about `0.5`;
//! walkers leaving the ball are killed and the population is restored by
//! multinomial resampling among the survivors. The survival probability is
//! the product of the per-stage survival fractions. Holding times are
//! redrawn at stage boundaries, which is exact because they are
//! exponential.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::MeanEstimate;
use crate::error::{invalid, Error, Result};
use crate::params::ProblemParams;
use crate::rng;
use crate::table::{num, CsvTable};

const STAGE: f64 = 0.5;
const MIN_SURVIVAL: f64 = 1e-6;
const RESAMPLE_TAG: u64 = 0x7265_7361_6d70;

/// Sites `x ∈ Z^d` with `|x|_2 ≤ R`, stored as a mask on the box
/// `[-⌊R⌋, ⌊R⌋]^d` (axis 0 slowest).
#[derive(Debug, Clone)]
struct Ball {
    d: usize,
    half: i64,
    side: usize,
    inside: Vec<bool>,
}

impl Ball {
    fn new(d: usize, radius: f64) -> Self {
        let half = radius.floor() as i64;
        let side = (2 * half + 1) as usize;
        let mut ball = Self {
            d,
            half,
            side,
            inside: vec![false; side.pow(d as u32)],
        };
        for i in 0..ball.inside.len() {
            let r2: i64 = ball.site(i).iter().map(|c| c * c).sum();
            ball.inside[i] = (r2 as f64) <= radius * radius;
        }
        ball
    }

    fn site(&self, mut i: usize) -> Vec<i64> {
        let mut x = vec![0i64; self.d];
        for k in (0..self.d).rev() {
            x[k] = (i % self.side) as i64 - self.half;
            i /= self.side;
        }
        x
    }

    fn index(&self, x: &[i64]) -> Option<usize> {
        let mut i = 0usize;
        for &c in x {
            if c.abs() > self.half {
                return None;
            }
            i = i * self.side + (c + self.half) as usize;
        }
        self.inside[i].then_some(i)
    }

    fn sites(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.inside.len()).filter(|&i| self.inside[i])
    }

    fn neighbours(&self, i: usize) -> Vec<Option<usize>> {
        let x = self.site(i);
        let mut out = Vec::with_capacity(2 * self.d);
        for k in 0..self.d {
            for s in [1, -1] {
                let mut y = x.clone();
                y[k] += s;
                out.push(self.index(&y));
            }
        }
        out
    }

    /// Sites whose `2d` neighbours all lie in the ball.
    fn interior(&self) -> Vec<usize> {
        self.sites()
            .filter(|&i| self.neighbours(i).iter().all(Option::is_some))
            .collect()
    }

    /// Principal eigenvector of the ball's adjacency matrix, i.e. the
    /// ground state of the walk killed on leaving the ball. Power iteration
    /// on `A + I` (the graph is bipartite).
    fn ground_state(&self) -> Vec<f64> {
        let sites: Vec<usize> = self.sites().collect();
        let nbrs: Vec<Vec<usize>> = sites
            .iter()
            .map(|&i| self.neighbours(i).into_iter().flatten().collect())
            .collect();
        let mut phi = vec![0.0; self.inside.len()];
        for &i in &sites {
            phi[i] = 1.0;
        }
        for _ in 0..200_000 {
            let mut next = vec![0.0; phi.len()];
            for (k, &i) in sites.iter().enumerate() {
                next[i] = phi[i] + nbrs[k].iter().map(|&j| phi[j]).sum::<f64>();
            }
            let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
            next.iter_mut().for_each(|v| *v /= norm);
            let change = next.iter().zip(&phi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            phi = next;
            if change < 1e-14 {
                break;
            }
        }
        phi
    }
}

#[derive(Debug, Clone)]
struct Walker {
    pos: Vec<i64>,
    local: Vec<f64>,
    alive: bool,
}

/// Advances one walker by `span`; returns false if it left the ball.
fn advance<R: Rng + ?Sized>(w: &mut Walker, ball: &Ball, span: f64, rng: &mut R) -> bool {
    let d = ball.d;
    let holding = Exp::new(2.0 * d as f64).expect("positive rate");
    let mut remaining = span;
    let mut here = ball.index(&w.pos).expect("walker inside ball");
    loop {
        let dt: f64 = holding.sample(rng);
        if dt >= remaining {
            w.local[here] += remaining;
            return true;
        }
        w.local[here] += dt;
        remaining -= dt;
        let dir = rng.random_range(0..2 * d);
        w.pos[dir / 2] += if dir % 2 == 0 { 1 } else { -1 };
        match ball.index(&w.pos) {
            Some(i) => here = i,
            None => return false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfinementRecord {
    pub params: ProblemParams,
    pub r_ball: f64,
    pub t: f64,
    pub n_samples: u64,
    pub seed: u64,
    pub stages: usize,
    pub ball_sites: usize,
    /// Estimated `P(walk stays in the ball up to t)`.
    pub survival: f64,
    /// `E[I_t | confined]`.
    pub mean_silt: f64,
    /// Standard error of `mean_silt` treating the final population as
    /// independent; resampling correlations make this optimistic.
    pub silt_se: f64,
    /// `t^p |B|^{1-p}`: the time spread evenly over the ball's sites.
    pub heuristic_volume: f64,
    /// `t^p R^{d(1-p)}`.
    pub heuristic_radius: f64,
    pub ratio_volume: f64,
    pub ratio_radius: f64,
    /// max/min of the mean occupation over interior sites.
    pub flatness: f64,
    /// The same ratio for the squared ground state, the long-time limit.
    pub flatness_limit: f64,
    pub interior_sites: usize,
    /// `(site, mean occupation / t, ground-state density)` per ball site.
    pub profile: Vec<(Vec<i64>, f64, f64)>,
}

impl ConfinementRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("records serialize")
    }

    pub fn to_csv(&self) -> CsvTable {
        let d = self.params.d();
        let mut header: Vec<String> = (0..d).map(|k| format!("x{k}")).collect();
        header.push("occupation".into());
        header.push("ground_state".into());
        let refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut table = CsvTable::new(&refs);
        for (x, occ, phi2) in &self.profile {
            let mut row: Vec<String> = x.iter().map(|c| c.to_string()).collect();
            row.push(num(*occ));
            row.push(num(*phi2));
            table.push(row);
        }
        table
    }
}

fn ratio_over(values: &[f64], sites: &[usize]) -> f64 {
    let (lo, hi) = sites.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &i| {
        (lo.min(values[i]), hi.max(values[i]))
    });
    hi / lo
}

/// Walker `i` in stage `k` draws from `stream(derive_seed(seed, k), i)`;
/// resampling after stage `k` uses `stream(derive_seed(seed, TAG), k)`.
pub fn confinement_probe(
    params: &ProblemParams,
    r_ball: f64,
    t: f64,
    n_samples: u64,
    seed: u64,
) -> Result<ConfinementRecord> {
    if !(r_ball.is_finite() && r_ball >= 1.0) {
        return Err(invalid(format!("R_ball must be >= 1, got {r_ball}")));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(invalid(format!("t must be > 0, got {t}")));
    }
    if n_samples == 0 {
        return Err(invalid("n_samples must be >= 1"));
    }
    let (d, p) = (params.d(), params.p());
    let ball = Ball::new(d, r_ball);
    let n = n_samples as usize;
    let stages = (t / STAGE).ceil() as usize;
    let span = t / stages as f64;
    let fresh = Walker {
        pos: vec![0; d],
        local: vec![0.0; ball.inside.len()],
        alive: true,
    };
    let mut walkers = vec![fresh; n];
    let resample_seed = rng::derive_seed(seed, RESAMPLE_TAG);
    let mut log_survival = 0.0;
    for stage in 0..stages {
        let stage_seed = rng::derive_seed(seed, stage as u64);
        walkers.par_iter_mut().enumerate().for_each(|(i, w)| {
            let mut rng = rng::stream(stage_seed, i as u64);
            w.alive = advance(w, &ball, span, &mut rng);
        });
        let alive: Vec<usize> = (0..n).filter(|&i| walkers[i].alive).collect();
        if alive.is_empty() {
            return Err(Error::Aborted(format!(
                "no walker survived stage {stage} of {stages} (R_ball={r_ball}, t={t})"
            )));
        }
        log_survival += (alive.len() as f64 / n as f64).ln();
        if log_survival < MIN_SURVIVAL.ln() {
            return Err(Error::Aborted(format!(
                "survival probability {:e} below {MIN_SURVIVAL:e} after time {}",
                log_survival.exp(),
                span * (stage + 1) as f64
            )));
        }
        if alive.len() < n {
            let mut rng = rng::stream(resample_seed, stage as u64);
            let next: Vec<Walker> = (0..n)
                .map(|_| walkers[alive[rng.random_range(0..alive.len())]].clone())
                .collect();
            walkers = next;
        }
    }

    let mut silt = MeanEstimate::default();
    let mut occupation = vec![0.0; ball.inside.len()];
    for w in &walkers {
        silt.push(ball.sites().map(|i| w.local[i].powf(p)).sum());
        for i in ball.sites() {
            occupation[i] += w.local[i];
        }
    }
    occupation.iter_mut().for_each(|v| *v /= n as f64 * t);

    let phi = ball.ground_state();
    let phi_norm: f64 = phi.iter().map(|v| v * v).sum();
    let density: Vec<f64> = phi.iter().map(|v| v * v / phi_norm).collect();
    let interior = ball.interior();
    let (flatness, flatness_limit) = if interior.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (ratio_over(&occupation, &interior), ratio_over(&density, &interior))
    };
    let ball_sites = ball.sites().count();
    let heuristic_volume = t.powf(p) * (ball_sites as f64).powf(1.0 - p);
    let heuristic_radius = t.powf(p) * r_ball.powf(d as f64 * (1.0 - p));
    let profile = ball
        .sites()
        .map(|i| (ball.site(i), occupation[i], density[i]))
        .collect();
    Ok(ConfinementRecord {
        params: *params,
        r_ball,
        t,
        n_samples,
        seed,
        stages,
        ball_sites,
        survival: log_survival.exp(),
        mean_silt: silt.mean(),
        silt_se: silt.standard_error(),
        heuristic_volume,
        heuristic_radius,
        ratio_volume: silt.mean() / heuristic_volume,
        ratio_radius: silt.mean() / heuristic_radius,
        flatness,
        flatness_limit,
        interior_sites: interior.len(),
        profile,
    })
}
