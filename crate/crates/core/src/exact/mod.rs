//! Ground-truth oracles: exhaustive enumeration, big-integer dynamic
//! programming and exact binomial coefficients.
//!
//! Elements are distinguished by index, so duplicate values give distinct
//! subsets. Only non-empty subsets (`k >= 1`) are counted.

mod binomial;
mod dp;
mod enumerate;
pub(crate) mod pmf;

use std::fmt;

use num_bigint::BigUint;
use num_traits::Zero;

pub use binomial::{binomial, binomial_multiplicative};
pub use dp::{dp_counts, dp_counts_real, dp_interval_counts, integer_values, DP_CELL_LIMIT};
pub use enumerate::{enumerate_counts, enumerate_counts_capped, DEFAULT_ENUMERATION_CAP};
pub use pmf::{exact_sum_pmf, ExactSumPmf, PMF_GROUPING_TOLERANCE, PMF_SUBSET_BUDGET};

/// Exact number of qualifying subsets for each size `k = 1..=n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountBySize {
    counts: Vec<BigUint>,
    total: BigUint,
}

impl CountBySize {
    /// Builds from counts ordered by `k = 1..=n`.
    pub fn from_counts(counts: Vec<BigUint>) -> Self {
        let total = counts.iter().fold(BigUint::zero(), |acc, c| acc + c);
        CountBySize { counts, total }
    }

    /// Number of elements in the underlying set.
    pub fn n(&self) -> usize {
        self.counts.len()
    }

    /// Count of qualifying `k`-subsets; zero outside `1..=n`.
    pub fn get(&self, k: usize) -> BigUint {
        if k == 0 || k > self.counts.len() {
            return BigUint::zero();
        }
        self.counts[k - 1].clone()
    }

    pub fn counts(&self) -> &[BigUint] {
        &self.counts
    }

    /// `(k, count)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &BigUint)> {
        self.counts.iter().enumerate().map(|(i, c)| (i + 1, c))
    }

    pub fn total(&self) -> &BigUint {
        &self.total
    }
}

impl fmt::Display for CountBySize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "total {} [", self.total)?;
        for (k, c) in self.iter() {
            if k > 1 {
                f.write_str(", ")?;
            }
            write!(f, "k={k}: {c}")?;
        }
        f.write_str("]")
    }
}
