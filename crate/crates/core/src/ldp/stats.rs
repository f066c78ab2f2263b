//! Estimators shared by the Monte Carlo experiments.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

/// Samples per work unit. Results are merged in chunk order, so outputs do
/// not depend on the number of threads.
pub const CHUNK: u64 = 4096;

/// Runs `work` on consecutive index ranges in parallel and returns the
/// per-range results in index order.
pub fn par_chunks<A, F>(n: u64, work: F) -> Vec<A>
where
    A: Send,
    F: Fn(Range<u64>) -> A + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| work(c * CHUNK..((c + 1) * CHUNK).min(n)))
        .collect()
}

/// Running mean and variance (Welford), mergeable (Chan et al.).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub count: u64,
    mean: f64,
    m2: f64,
}

impl MeanEstimate {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Self) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn standard_error(&self) -> f64 {
        if self.count == 0 {
            return f64::INFINITY;
        }
        (self.variance() / self.count as f64).sqrt()
    }
}

/// A binomial proportion with its standard error and exact
/// (Clopper-Pearson) confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub hits: u64,
    pub n: u64,
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Proportion {
    pub fn new(hits: u64, n: u64, confidence: f64) -> Self {
        assert!(n > 0 && hits <= n);
        let estimate = hits as f64 / n as f64;
        let se = (estimate * (1.0 - estimate) / n as f64).sqrt();
        let (ci_low, ci_high) = clopper_pearson(hits, n, confidence);
        Self {
            hits,
            n,
            estimate,
            se,
            ci_low,
            ci_high,
        }
    }

    /// Standard error under the hypothesised probability `p0`.
    pub fn se_under(&self, p0: f64) -> f64 {
        (p0 * (1.0 - p0) / self.n as f64).sqrt()
    }
}

/// Exact two-sided binomial interval from beta quantiles.
pub fn clopper_pearson(hits: u64, n: u64, confidence: f64) -> (f64, f64) {
    let alpha = 1.0 - confidence;
    let k = hits as f64;
    let nf = n as f64;
    let low = if hits == 0 {
        0.0
    } else {
        Beta::new(k, nf - k + 1.0)
            .expect("valid beta")
            .inverse_cdf(alpha / 2.0)
    };
    let high = if hits == n {
        1.0
    } else {
        Beta::new(k + 1.0, nf - k)
            .expect("valid beta")
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    (low, high)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_merge_matches_direct() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let mut whole = MeanEstimate::default();
        xs.iter().for_each(|&x| whole.push(x));
        let mut a = MeanEstimate::default();
        let mut b = MeanEstimate::default();
        xs[..333].iter().for_each(|&x| a.push(x));
        xs[333..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        let mean = xs.iter().sum::<f64>() / 1000.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 999.0;
        assert!((whole.mean() - mean).abs() < 1e-12);
        assert!((a.mean() - mean).abs() < 1e-12);
        assert!((whole.variance() - var).abs() < 1e-10);
        assert!((a.variance() - var).abs() < 1e-10);
    }

    #[test]
    fn clopper_pearson_edges() {
        let (lo, hi) = clopper_pearson(0, 100, 0.95);
        assert_eq!(lo, 0.0);
        // (alpha/2)^{1/n} rule for zero hits
        assert!((hi - (1.0 - 0.025f64.powf(0.01))).abs() < 1e-9);
        let (lo, hi) = clopper_pearson(50, 100, 0.95);
        assert!(lo < 0.5 && hi > 0.5 && (0.5 - lo - (hi - 0.5)).abs() < 1e-9);
        assert_eq!(clopper_pearson(7, 7, 0.95).1, 1.0);
    }

    #[test]
    fn chunks_are_ordered() {
        let out = par_chunks(3 * CHUNK + 5, |r| r.start);
        assert_eq!(out, vec![0, CHUNK, 2 * CHUNK, 3 * CHUNK]);
    }
}
