//! Monte Carlo estimates with standard errors, and the ordered parallel map
//! every estimator uses so results do not depend on the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithError {
    pub mean: f64,
    pub standard_error: f64,
    pub n: usize,
}

impl EstimateWithError {
    /// Sample mean and standard error of the mean. Sums use a fixed pairwise
    /// tree over the sample order, so the result is bit-reproducible.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        assert!(n >= 1, "estimate needs at least one sample");
        let mean = pairwise_sum(samples) / n as f64;
        if n == 1 {
            return Self {
                mean,
                standard_error: 0.0,
                n,
            };
        }
        let sq: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&sq) / (n - 1) as f64;
        Self {
            mean,
            standard_error: (var / n as f64).sqrt(),
            n,
        }
    }

    pub fn exact(value: f64) -> Self {
        Self {
            mean: value,
            standard_error: 0.0,
            n: 1,
        }
    }

    /// `sqrt(se_a^2 + se_b^2)`.
    pub fn combined_se(&self, other: &Self) -> f64 {
        self.standard_error.hypot(other.standard_error)
    }

    /// `|mean - target| <= k * se`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.standard_error
    }

    /// `|a - b| <= k * combined_se`.
    pub fn agrees_with(&self, other: &Self, k: f64) -> bool {
        (self.mean - other.mean).abs() <= k * self.combined_se(other)
    }
}

pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Evaluates `f` for every path index in `0..n` on the current rayon pool and
/// returns the results in index order. The first error by index wins.
pub fn map_paths<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_samples_have_zero_error() {
        let e = EstimateWithError::from_samples(&[2.5; 1000]);
        assert_eq!(e.mean, 2.5);
        assert_eq!(e.standard_error, 0.0);
        assert_eq!(e.n, 1000);
    }

    #[test]
    fn mean_and_se_match_textbook() {
        let e = EstimateWithError::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        // sample variance 5/3, se = sqrt(5/12)
        assert!((e.standard_error - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ordered_map_is_independent_of_pool_size() {
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let xs = map_paths(10_000, |i| Ok(((i as f64) * 0.37).sin())).unwrap();
                EstimateWithError::from_samples(&xs)
            })
        };
        let a = run(1);
        let b = run(8);
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.standard_error.to_bits(), b.standard_error.to_bits());
    }
}
