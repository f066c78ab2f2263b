//! Direct Monte Carlo for `P(I_t ≥ t^p r_t^p)`.

use serde::{Deserialize, Serialize};

use super::stats::{par_chunks, Proportion};
use crate::error::{invalid, Result};
use crate::lattice_walk::{sample_silt, DenseSink};
use crate::params::{validate_window, ProblemParams};
use crate::rng;
use crate::table::{num, CsvTable};

/// Confidence level of every reported interval.
pub const CONFIDENCE: f64 = 0.95;

/// `r_t = c t^{-θ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RSchedule {
    pub c: f64,
    pub theta: f64,
}

impl RSchedule {
    pub fn r(&self, t: f64) -> f64 {
        self.c * t.powf(-self.theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub t: f64,
    pub r_t: f64,
    /// `(t r_t)^p`.
    pub threshold: f64,
    /// `t r_t^{2q/d}`, the large-deviation speed.
    pub speed: f64,
    pub hits: u64,
    pub n: u64,
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// No hits: only `ci_high` is informative.
    pub upper_bound_only: bool,
}

/// Self-describing output of a tail experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub experiment: String,
    pub params: ProblemParams,
    pub schedule: Option<RSchedule>,
    pub t_grid: Vec<f64>,
    pub n_samples: u64,
    pub seed: u64,
    pub window_slack: Option<f64>,
    pub points: Vec<TailPoint>,
}

impl ExperimentRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("records serialize")
    }

    /// `t,r_t,estimate,ci_low,ci_high,hits,n`.
    pub fn to_csv(&self) -> CsvTable {
        let mut table = CsvTable::new(&["t", "r_t", "estimate", "ci_low", "ci_high", "hits", "n"]);
        for p in &self.points {
            table.push(vec![
                num(p.t),
                num(p.r_t),
                num(p.estimate),
                num(p.ci_low),
                num(p.ci_high),
                p.hits.to_string(),
                p.n.to_string(),
            ]);
        }
        table
    }
}

/// Hits of `I_t ≥ (t r)^p` over samples `0..n`; sample `i` uses stream `i`
/// of `seed`.
pub fn tail_point(params: &ProblemParams, t: f64, r_t: f64, n_samples: u64, seed: u64) -> Result<TailPoint> {
    if !(t.is_finite() && t > 0.0) {
        return Err(invalid(format!("t must be > 0, got {t}")));
    }
    if !(r_t > 0.0 && r_t <= 1.0) {
        return Err(invalid(format!("r_t must lie in (0, 1], got {r_t}")));
    }
    if n_samples == 0 {
        return Err(invalid("n_samples must be >= 1"));
    }
    let (d, p) = (params.d(), params.p());
    let threshold = (t * r_t).powf(p);
    let half = (4.0 * (2.0 * t).sqrt()).ceil() as i64 + 4;
    let counts = par_chunks(n_samples, |range| {
        let mut sink = DenseSink::new(d, half);
        let mut hits = 0u64;
        for i in range {
            let mut rng = rng::stream(seed, i);
            if sample_silt(d, t, p, &mut rng, &mut sink) >= threshold {
                hits += 1;
            }
        }
        hits
    });
    let hits = counts.iter().sum();
    let prop = Proportion::new(hits, n_samples, CONFIDENCE);
    Ok(TailPoint {
        t,
        r_t,
        threshold,
        speed: t * r_t.powf(2.0 * params.q() / d as f64),
        hits,
        n: n_samples,
        estimate: prop.estimate,
        se: prop.se,
        ci_low: prop.ci_low,
        ci_high: prop.ci_high,
        upper_bound_only: hits == 0,
    })
}

/// One [`tail_point`] per `t`, with `r_t` from the schedule checked against
/// the admissible window (with `slack`). Point `k` uses the derived seed
/// `derive_seed(seed, k)`.
pub fn tail_probability_mc(
    params: &ProblemParams,
    t_grid: &[f64],
    schedule: RSchedule,
    n_samples: u64,
    seed: u64,
    slack: f64,
) -> Result<ExperimentRecord> {
    if !params.is_subcritical() {
        return Err(crate::Error::Regime {
            d: params.d(),
            p: params.p(),
        });
    }
    if t_grid.is_empty() {
        return Err(invalid("t grid is empty"));
    }
    for &t in t_grid {
        validate_window(params, t, schedule.r(t), slack)?;
    }
    let points = t_grid
        .iter()
        .enumerate()
        .map(|(k, &t)| tail_point(params, t, schedule.r(t), n_samples, rng::derive_seed(seed, k as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentRecord {
        experiment: "tail_probability".into(),
        params: *params,
        schedule: Some(schedule),
        t_grid: t_grid.to_vec(),
        n_samples,
        seed,
        window_slack: Some(slack),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pp() -> ProblemParams {
        ProblemParams::new(1, 2.0).unwrap()
    }

    #[test]
    fn full_threshold_is_the_no_jump_event() {
        let t = 1.0;
        let pt = tail_point(&pp(), t, 1.0, 200_000, 5).unwrap();
        let exact = (-2.0f64 * t).exp();
        assert!((pt.estimate - exact).abs() < 4.0 * pt.se, "{} {exact}", pt.estimate);
    }

    #[test]
    fn moderate_threshold_has_hits() {
        let pt = tail_point(&pp(), 4.0, 0.6, 100_000, 1).unwrap();
        assert!(pt.hits > 0 && pt.hits < pt.n);
        assert!(pt.ci_low < pt.estimate && pt.estimate < pt.ci_high);
    }

    #[test]
    fn doubling_samples_shrinks_se() {
        let a = tail_point(&pp(), 4.0, 0.6, 40_000, 2).unwrap();
        let b = tail_point(&pp(), 4.0, 0.6, 80_000, 2).unwrap();
        let ratio = a.se / b.se;
        assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn zero_hits_give_upper_bound() {
        let pt = tail_point(&pp(), 30.0, 1.0, 1000, 0).unwrap();
        assert!(pt.upper_bound_only);
        assert!(pt.ci_high > 0.0 && pt.ci_low == 0.0);
    }

    #[test]
    fn schedule_outside_window_is_rejected() {
        let s = RSchedule { c: 1.0, theta: 0.4 };
        let err = tail_probability_mc(&pp(), &[16.0], s, 10, 0, 1.0).unwrap_err();
        assert!(matches!(err, crate::Error::ScaleWindow(_)));
        let bad = ProblemParams::new(3, 3.0).unwrap();
        assert!(matches!(
            tail_probability_mc(&bad, &[16.0], RSchedule { c: 1.0, theta: 0.1 }, 10, 0, 1.0),
            Err(crate::Error::Regime { .. })
        ));
    }

    #[test]
    fn reproducible_and_thread_independent() {
        let s = RSchedule { c: 1.0, theta: 0.2 };
        let a = tail_probability_mc(&pp(), &[4.0, 8.0], s, 10_000, 9, 1.0).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| tail_probability_mc(&pp(), &[4.0, 8.0], s, 10_000, 9, 1.0).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.to_csv().render(), b.to_csv().render());
    }
}
