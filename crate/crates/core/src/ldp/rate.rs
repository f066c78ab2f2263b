//! Empirical rate: weighted least squares of `log P̂` against the speed
//! `x = t r_t^{2q/d}`.

use serde::{Deserialize, Serialize};

use super::tail::ExperimentRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Empirical `-χ`.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_se: f64,
    /// Weighted residual sum of squares per degree of freedom.
    pub chi2_per_dof: f64,
    /// Quadratic coefficient of a weighted quadratic fit and its standard
    /// error; a large ratio flags a pre-asymptotic regime.
    pub curvature: f64,
    pub curvature_se: f64,
    pub curved: bool,
    /// `(t, x, -log P̂ / x)` per used point.
    pub pointwise: Vec<(f64, f64, f64)>,
    pub n_points: usize,
}

/// Solves the weighted normal equations for a polynomial of degree
/// `k - 1`; returns coefficients and the diagonal of the inverse.
fn weighted_polyfit(x: &[f64], y: &[f64], w: &[f64], k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = vec![vec![0.0; 2 * k]; k];
    let mut b = vec![0.0; k];
    for i in 0..x.len() {
        let pows: Vec<f64> = (0..k).map(|j| x[i].powi(j as i32)).collect();
        for r in 0..k {
            b[r] += w[i] * pows[r] * y[i];
            for c in 0..k {
                a[r][c] += w[i] * pows[r] * pows[c];
            }
        }
    }
    // Gauss-Jordan on [A | I], then apply to b
    for (r, row) in a.iter_mut().enumerate() {
        row[k + r] = 1.0;
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        let div = a[col][col];
        a[col].iter_mut().for_each(|v| *v /= div);
        for r in 0..k {
            if r != col {
                let f = a[r][col];
                let pivot_row = a[col].clone();
                a[r].iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
            }
        }
    }
    let coef = (0..k).map(|r| (0..k).map(|c| a[r][k + c] * b[c]).sum()).collect();
    let diag = (0..k).map(|r| a[r][k + r]).collect();
    (coef, diag)
}

/// Fits `log P̂ = intercept + slope · x` with weights `1/Var(log P̂) ≈
/// hits / (1 - P̂)`. Points without hits are skipped; fewer than four
/// usable points is an error.
pub fn rate_extraction(record: &ExperimentRecord) -> Result<RateFit> {
    let used: Vec<_> = record.points.iter().filter(|p| p.hits > 0 && p.hits < p.n).collect();
    if used.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "rate extraction needs >= 4 points with hits, got {}",
            used.len()
        )));
    }
    let x: Vec<f64> = used.iter().map(|p| p.speed).collect();
    let y: Vec<f64> = used.iter().map(|p| p.estimate.ln()).collect();
    let w: Vec<f64> = used
        .iter()
        .map(|p| p.hits as f64 / (1.0 - p.estimate))
        .collect();
    let (line, diag) = weighted_polyfit(&x, &y, &w, 2);
    let (intercept, slope) = (line[0], line[1]);
    let sw: f64 = w.iter().sum();
    let ybar = w.iter().zip(&y).map(|(wi, yi)| wi * yi).sum::<f64>() / sw;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for i in 0..x.len() {
        ss_res += w[i] * (y[i] - intercept - slope * x[i]).powi(2);
        ss_tot += w[i] * (y[i] - ybar).powi(2);
    }
    let dof = (x.len() - 2) as f64;
    let (quad, qdiag) = weighted_polyfit(&x, &y, &w, 3);
    let curvature_se = qdiag[2].sqrt();
    Ok(RateFit {
        slope,
        intercept,
        r_squared: if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 },
        slope_se: diag[1].sqrt(),
        chi2_per_dof: ss_res / dof,
        curvature: quad[2],
        curvature_se,
        curved: (quad[2] / curvature_se).abs() > 3.0,
        pointwise: used.iter().map(|p| (p.t, p.speed, -p.estimate.ln() / p.speed)).collect(),
        n_points: used.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ldp::tail::TailPoint;
    use crate::params::ProblemParams;
    use rand::SeedableRng;
    use rand_distr::{Binomial, Distribution};

    fn record(points: Vec<TailPoint>) -> ExperimentRecord {
        ExperimentRecord {
            experiment: "synthetic".into(),
            params: ProblemParams::new(1, 2.0).unwrap(),
            schedule: None,
            t_grid: points.iter().map(|p| p.t).collect(),
            n_samples: points.first().map_or(0, |p| p.n),
            seed: 0,
            window_slack: None,
            points,
        }
    }

    fn point(x: f64, hits: u64, n: u64, estimate: f64) -> TailPoint {
        TailPoint {
            t: x,
            r_t: 1.0,
            threshold: 0.0,
            speed: x,
            hits,
            n,
            estimate,
            se: 0.0,
            ci_low: 0.0,
            ci_high: 1.0,
            upper_bound_only: hits == 0,
        }
    }

    #[test]
    fn exact_line_is_recovered() {
        let c = 1.37;
        let pts = (1..=6)
            .map(|k| {
                let x = 0.5 * k as f64;
                point(x, 100 + k, 1_000_000, (0.2 - c * x).exp())
            })
            .collect();
        let fit = rate_extraction(&record(pts)).unwrap();
        assert!((fit.slope + c).abs() < 1e-12);
        assert!((fit.intercept - 0.2).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn binomial_noise_within_four_se() {
        let c = 0.9;
        let n = 200_000u64;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pts = (1..=8)
            .map(|k| {
                let x = 0.75 * k as f64;
                let p = (-c * x).exp();
                let hits = Binomial::new(n, p).unwrap().sample(&mut rng);
                point(x, hits, n, hits as f64 / n as f64)
            })
            .collect();
        let fit = rate_extraction(&record(pts)).unwrap();
        assert!((fit.slope + c).abs() < 4.0 * fit.slope_se, "{} ± {}", fit.slope, fit.slope_se);
        assert!(!fit.curved);
    }

    #[test]
    fn refuses_short_records() {
        let pts = vec![point(1.0, 10, 100, 0.1), point(2.0, 0, 100, 0.0), point(3.0, 1, 100, 0.01)];
        assert!(matches!(rate_extraction(&record(pts)), Err(Error::InsufficientData(_))));
    }
}
