//! Sampled subset sums smoothed with a tophat kernel.
//!
//! Sampling is sharded into fixed blocks of [`SHARD_SIZE`] draws. Block `i`
//! uses ChaCha8 seeded with the user seed and switched to stream `i`, so the
//! sample is identical no matter how many threads run the blocks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::SumLaw;
use crate::error::{Error, Result};
use crate::moments::check_values;

pub const DEFAULT_KDE_SAMPLES: usize = 10_000;

/// Draws per RNG stream.
pub const SHARD_SIZE: usize = 4096;

/// Gaps below this fraction of the sample's magnitude count as ties, so
/// rounding noise between equal sums summed in different orders cannot
/// shrink the bandwidth to nothing.
const TIE_TOLERANCE: f64 = 1e-9;

/// Sums of `m` independent uniformly random `k`-subsets of `set`.
pub fn sample_subset_sums(set: &[f64], k: usize, m: usize, seed: u64) -> Result<Vec<f64>> {
    check_values(set)?;
    let n = set.len();
    if k == 0 || k > n {
        return Err(Error::domain(format!("subset size k = {k} outside 1..={n}")));
    }
    if m < 2 {
        return Err(Error::domain(format!("need at least 2 samples for a bandwidth, got {m}")));
    }
    // draw the smaller side and subtract from the total when k > n/2
    let complement = k > n / 2;
    let draw = if complement { n - k } else { k };
    let total: f64 = set.iter().sum();

    let shards = m.div_ceil(SHARD_SIZE);
    let blocks: Vec<Vec<f64>> = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let len = SHARD_SIZE.min(m - shard * SHARD_SIZE);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(shard as u64);
            let mut index: Vec<usize> = (0..n).collect();
            (0..len)
                .map(|_| {
                    // partial Fisher–Yates: the first `draw` slots become a uniform subset
                    for i in 0..draw {
                        let j = rng.random_range(i..n);
                        index.swap(i, j);
                    }
                    let s: f64 = index[..draw].iter().map(|&i| set[i]).sum();
                    if complement {
                        total - s
                    } else {
                        s
                    }
                })
                .collect()
        })
        .collect();
    Ok(blocks.concat())
}

/// Tenth percentile (lower interpolation) of the non-zero gaps between
/// consecutive sorted sums; `max(|mean|, 1) * 1e-6` when every gap is zero.
pub fn fit_bandwidth(sums: &[f64]) -> f64 {
    let mut sorted = sums.to_vec();
    sorted.sort_by(f64::total_cmp);
    bandwidth_of_sorted(&sorted)
}

fn bandwidth_of_sorted(sorted: &[f64]) -> f64 {
    let scale = sorted.iter().fold(1.0f64, |acc, s| acc.max(s.abs()));
    let tie = TIE_TOLERANCE * scale;
    let mut gaps: Vec<f64> = sorted.windows(2).map(|w| w[1] - w[0]).filter(|&g| g > tie).collect();
    if gaps.is_empty() {
        let mean = sorted.iter().sum::<f64>() / sorted.len().max(1) as f64;
        return mean.abs().max(1.0) * 1e-6;
    }
    gaps.sort_by(f64::total_cmp);
    gaps[(0.1 * (gaps.len() - 1) as f64).floor() as usize]
}

/// Tophat kernel density estimate of a subset-sum distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeModel {
    /// Sampled sums, sorted.
    sums: Vec<f64>,
    bandwidth: f64,
    k: usize,
    seed: u64,
}

impl KdeModel {
    /// Samples `m` subset sums and fits the bandwidth.
    pub fn fit(set: &[f64], k: usize, m: usize, seed: u64) -> Result<Self> {
        let sums = sample_subset_sums(set, k, m, seed)?;
        Self::from_sums(sums, k, seed)
    }

    pub fn from_sums(mut sums: Vec<f64>, k: usize, seed: u64) -> Result<Self> {
        if sums.len() < 2 {
            return Err(Error::domain("need at least 2 samples for a bandwidth"));
        }
        if let Some(index) = sums.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        sums.sort_by(f64::total_cmp);
        let bandwidth = bandwidth_of_sorted(&sums);
        Ok(KdeModel { sums, bandwidth, k, seed })
    }

    pub fn sums(&self) -> &[f64] {
        &self.sums
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of sums strictly below `x`.
    fn below(&self, x: f64) -> usize {
        self.sums.partition_point(|&s| s < x)
    }

    /// Number of sums at or below `x`.
    fn at_or_below(&self, x: f64) -> usize {
        self.sums.partition_point(|&s| s <= x)
    }
}

pub fn kde_density(model: &KdeModel, t: f64) -> f64 {
    let h = model.bandwidth;
    let inside = model.at_or_below(t + h) - model.below(t - h);
    inside as f64 / (2.0 * h * model.sums.len() as f64)
}

pub fn kde_cdf(model: &KdeModel, t: f64) -> f64 {
    model.cdf(t)
}

impl SumLaw for KdeModel {
    /// `(1/m) Σ clamp((t - s + h) / 2h, 0, 1)`.
    fn cdf(&self, t: f64) -> f64 {
        let h = self.bandwidth;
        let full = self.at_or_below(t - h);
        let end = self.below(t + h);
        let partial: f64 = self.sums[full..end.max(full)].iter().map(|s| (t - s + h) / (2.0 * h)).sum();
        ((full as f64 + partial) / self.sums.len() as f64).clamp(0.0, 1.0)
    }

    /// Mirror image of `cdf`, summed from the upper end.
    fn sf(&self, t: f64) -> f64 {
        let h = self.bandwidth;
        let start = self.at_or_below(t - h);
        let full_from = self.below(t + h).max(start);
        let full = self.sums.len() - full_from;
        let partial: f64 = self.sums[start..full_from].iter().map(|s| (s - t + h) / (2.0 * h)).sum();
        ((full as f64 + partial) / self.sums.len() as f64).clamp(0.0, 1.0)
    }

    fn density(&self, t: f64) -> f64 {
        kde_density(self, t)
    }

    fn mean(&self) -> f64 {
        self.sums.iter().sum::<f64>() / self.sums.len() as f64
    }

    /// Sample variance plus the kernel's own `h²/3`.
    fn variance(&self) -> f64 {
        let m = self.mean();
        let v = self.sums.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / self.sums.len() as f64;
        v + self.bandwidth * self.bandwidth / 3.0
    }
}
