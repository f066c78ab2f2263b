//! Folding onto the torus and exponential stopping:
//!
//! ```text
//! N_p(l_t) ≤ N_p(fold_N l_t)                       (every trajectory)
//! P[N_p(l_t) ≥ t r_t] ≤ e^{t λ_t} P[N_p(l_{N,τ}) ≥ t r_t],  τ ~ Exp(λ_t)
//! ```

use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::stats::{par_chunks, Proportion};
use super::tail::CONFIDENCE;
use crate::error::{invalid, Result};
use crate::lattice_walk::{fold_to_torus, silt, simulate_walk, torus_occupation, Geometry};
use crate::params::{ProblemParams, ScalingSchedule};
use crate::rng;
use crate::table::{num, CsvTable};
use crate::torus::TorusShape;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub params: ProblemParams,
    pub scaling: ScalingSchedule,
    pub torus_side: usize,
    pub n_samples: u64,
    pub seed: u64,
    /// Trajectories with `N_p(l_t) > N_p(fold l_t)`.
    pub folding_violations: u64,
    /// Trajectories whose folded mass differs from `t` beyond rounding.
    pub mass_violations: u64,
    /// `P[N_p(l_t) ≥ t r_t]` on the free lattice.
    pub free: Proportion,
    /// `P[N_p(l_{N,τ}) ≥ t r_t]` for the torus walk stopped at `τ`.
    pub stopped: Proportion,
    /// `e^{t λ_t}`.
    pub factor: f64,
    /// `free - factor · stopped` in units of the combined standard error.
    pub z_score: f64,
    /// The inequality is not contradicted at four combined standard errors.
    pub holds: bool,
}

impl FoldRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("records serialize")
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["side", "estimate", "ci_low", "ci_high", "hits", "n"]);
        let factor = self.factor;
        for (name, p, f) in [("free", &self.free, 1.0), ("stopped", &self.stopped, factor)] {
            t.push(vec![
                name.into(),
                num(f * p.estimate),
                num(f * p.ci_low),
                num(f * p.ci_high),
                p.hits.to_string(),
                p.n.to_string(),
            ]);
        }
        t
    }
}

/// Per-trajectory folding checks and the two-ensemble comparison. The free
/// ensemble uses `derive_seed(seed, 1)`, the stopped one
/// `derive_seed(seed, 2)`.
pub fn periodization_stopping_check(
    params: &ProblemParams,
    scaling: &ScalingSchedule,
    n_samples: u64,
    seed: u64,
) -> Result<FoldRecord> {
    let n = scaling.torus_side();
    if n < 2 {
        return Err(invalid(format!("torus side R*alpha_t rounds to {n}; need >= 2")));
    }
    if n_samples == 0 {
        return Err(invalid("n_samples must be >= 1"));
    }
    let (d, p, t) = (params.d(), params.p(), scaling.t);
    let level = (t * scaling.r_t).powf(p);
    let free_seed = rng::derive_seed(seed, 1);
    let free = par_chunks(n_samples, |range| {
        let mut acc = (0u64, 0u64, 0u64);
        for i in range {
            let mut rng = rng::stream(free_seed, i);
            let field = simulate_walk(params, Geometry::FreeLattice { d }, t, &mut rng).expect("valid walk");
            let folded = fold_to_torus(&field, n).expect("valid side");
            let i_free = silt(&field, p).expect("p > 1");
            let i_fold = silt(&folded, p).expect("p > 1");
            if i_free > i_fold * (1.0 + 4.0 * f64::EPSILON) {
                acc.0 += 1;
            }
            if (folded.mass() - t).abs() > 64.0 * f64::EPSILON * t {
                acc.1 += 1;
            }
            if i_free >= level {
                acc.2 += 1;
            }
        }
        acc
    });
    let stop_seed = rng::derive_seed(seed, 2);
    let shape = TorusShape::new(n, d);
    let exp = Exp::new(scaling.lambda_t).map_err(|e| invalid(e.to_string()))?;
    let stopped_hits: u64 = par_chunks(n_samples, |range| {
        let mut hits = 0u64;
        for i in range {
            let mut rng = rng::stream(stop_seed, i);
            let tau: f64 = exp.sample(&mut rng);
            let l = torus_occupation(shape, tau, &mut rng);
            let i_torus: f64 = l.iter().map(|x| x.powf(p)).sum();
            if i_torus >= level {
                hits += 1;
            }
        }
        hits
    })
    .iter()
    .sum();
    let (fv, mv, fh) = free.iter().fold((0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let free = Proportion::new(fh, n_samples, CONFIDENCE);
    let stopped = Proportion::new(stopped_hits, n_samples, CONFIDENCE);
    let factor = (t * scaling.lambda_t).exp();
    let se = (free.se.powi(2) + (factor * stopped.se).powi(2)).sqrt();
    let gap = free.estimate - factor * stopped.estimate;
    let z_score = if se > 0.0 { gap / se } else if gap > 0.0 { f64::INFINITY } else { 0.0 };
    Ok(FoldRecord {
        params: *params,
        scaling: *scaling,
        torus_side: n,
        n_samples,
        seed,
        folding_violations: fv,
        mass_violations: mv,
        free,
        stopped,
        factor,
        z_score,
        holds: z_score <= 4.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folding_never_decreases_silt() {
        for d in 1..=3 {
            let params = ProblemParams::new(d, 2.0).unwrap();
            let scaling = ScalingSchedule::new(&params, 1.0, 4.0, 6.0, 0.7).unwrap();
            let rec = periodization_stopping_check(&params, &scaling, 2000, d as u64).unwrap();
            assert_eq!(rec.folding_violations, 0);
            assert_eq!(rec.mass_violations, 0);
        }
    }

    #[test]
    fn inequality_holds_d1() {
        let params = ProblemParams::new(1, 2.0).unwrap();
        // R alpha_t = 8 with alpha_t = r^{-2} = 4: r = 0.5, R = 2
        let scaling = ScalingSchedule::new(&params, 1.0, 2.0, 4.0, 0.5).unwrap();
        assert_eq!(scaling.torus_side(), 8);
        let rec = periodization_stopping_check(&params, &scaling, 20_000, 3).unwrap();
        assert!(rec.holds, "{rec:?}");
        assert!(rec.free.hits > 0 && rec.stopped.hits > 0);
    }

    #[test]
    fn small_lambda_makes_factor_trivial() {
        let params = ProblemParams::new(1, 2.0).unwrap();
        // lambda_t = 0.01 / 16, so E[tau] = 1600
        let scaling = ScalingSchedule::new(&params, 0.01, 2.0, 4.0, 0.5).unwrap();
        let rec = periodization_stopping_check(&params, &scaling, 1000, 4).unwrap();
        assert!((rec.factor - 1.0).abs() < 3e-3);
        assert!(rec.holds);
    }

    #[test]
    fn degenerate_torus_is_rejected() {
        let params = ProblemParams::new(1, 2.0).unwrap();
        let scaling = ScalingSchedule::new(&params, 1.0, 0.1, 4.0, 0.5).unwrap();
        assert!(periodization_stopping_check(&params, &scaling, 10, 0).is_err());
    }
}
