//! Closed-form moments of the sum of a uniformly random size-`k` subset drawn
//! without replacement from a finite set.
//!
//! Everything here uses the population convention (divisor `n`) for the
//! variance of the set. The variance of a subset sum carries the
//! finite-population factor `1 - (k-1)/(n-1)`, which vanishes at `k = n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Size, mean and population variance of a numeric set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetStatistics {
    pub n: usize,
    pub mean: f64,
    /// Population variance (divisor `n`).
    pub variance: f64,
    /// Sum of the elements, kept separately so that `k = n` is exact.
    pub sum: f64,
}

impl SetStatistics {
    /// Computes the statistics of `values` with a two-pass mean/variance.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        set_statistics(values)
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn total(&self) -> f64 {
        self.sum
    }
}

/// Rejects empty input and non-finite elements.
pub(crate) fn check_values(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::EmptySet);
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(())
}

pub fn set_statistics(values: &[f64]) -> Result<SetStatistics> {
    check_values(values)?;
    let n = values.len();
    let sum = values.iter().sum::<f64>();
    let mean = sum / n as f64;
    let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    Ok(SetStatistics { n, mean, variance, sum })
}

fn check_size(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::domain(format!("subset size k = {k} outside 1..={n}")));
    }
    Ok(())
}

/// Probability that a fixed element lands in a uniformly random `k`-subset: `k/n`.
pub fn membership_probability(k: usize, n: usize) -> Result<f64> {
    check_size(k, n)?;
    Ok(k as f64 / n as f64)
}

/// Expected sum of a uniformly random `k`-subset: `k * mean`, or the set sum itself at `k = n`.
pub fn subset_sum_mean(stats: &SetStatistics, k: usize) -> Result<f64> {
    check_size(k, stats.n)?;
    if k == stats.n {
        return Ok(stats.sum);
    }
    Ok(k as f64 * stats.mean)
}

/// Variance of the sum of a uniformly random `k`-subset,
/// `k σ² (1 - (k-1)/(n-1))`.
///
/// Evaluated as `σ² k (n-k) / (n-1)`, which is the same polynomial but is exactly
/// symmetric under `k -> n-k` and exactly zero at `k = n`. For `n = 1` the only
/// admissible `k` is 1 and the result is 0.
pub fn subset_sum_variance(stats: &SetStatistics, k: usize) -> Result<f64> {
    check_size(k, stats.n)?;
    let n = stats.n;
    if n == 1 {
        return Ok(0.0);
    }
    let pairs = (k as f64) * ((n - k) as f64);
    Ok((stats.variance * pairs / (n - 1) as f64).max(0.0))
}

/// Covariance of two distinct members of a random subset: `-σ²/(n-1)`.
pub fn pair_covariance(stats: &SetStatistics) -> Result<f64> {
    if stats.n < 2 {
        return Err(Error::CovarianceUndefined { n: stats.n });
    }
    Ok(-stats.variance / (stats.n - 1) as f64)
}

/// `E[x1 x2]` for two distinct members of a random subset: `mean² - σ²/(n-1)`.
pub fn pair_product_expectation(stats: &SetStatistics) -> Result<f64> {
    Ok(stats.mean * stats.mean + pair_covariance(stats)?)
}
