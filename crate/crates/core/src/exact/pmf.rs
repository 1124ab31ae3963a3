use num_bigint::BigUint;

use super::binomial;
use super::dp::{integer_values, sum_counts_of_size};
use crate::bigutil::ratio_to_f64;
use crate::error::{Error, Result};
use crate::moments::check_values;

/// Most `k`-subsets enumerated for a real-valued pmf.
pub const PMF_SUBSET_BUDGET: u64 = 20_000_000;

/// Real sums closer than this are one support point.
pub const PMF_GROUPING_TOLERANCE: f64 = 1e-9;

/// Exact distribution of the sum of a uniformly random `k`-subset.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSumPmf {
    pub k: usize,
    /// Achievable sums, increasing.
    pub support: Vec<f64>,
    /// `counts[i] / C(n, k)`.
    pub mass: Vec<f64>,
    /// Number of `k`-subsets with sum `support[i]`.
    pub counts: Vec<BigUint>,
    /// `C(n, k)`.
    pub subsets: BigUint,
}

impl ExactSumPmf {
    pub fn mean(&self) -> f64 {
        self.support.iter().zip(&self.mass).map(|(s, p)| s * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.support.iter().zip(&self.mass).map(|(s, p)| p * (s - m) * (s - m)).sum()
    }
}

/// Builds the exact pmf of `k`-subset sums.
///
/// Integer-valued sets go through the `(size, sum)` dynamic program; other
/// sets enumerate all `C(n, k)` subsets (bounded by [`PMF_SUBSET_BUDGET`])
/// and merge sums within [`PMF_GROUPING_TOLERANCE`] onto the first one seen
/// in sorted order.
pub fn exact_sum_pmf(set: &[f64], k: usize) -> Result<ExactSumPmf> {
    check_values(set)?;
    let n = set.len();
    if k == 0 || k > n {
        return Err(Error::domain(format!("subset size k = {k} outside 1..={n}")));
    }
    let subsets = binomial(n as u64, k as u64);

    if let Some(ints) = integer_values(set) {
        match sum_counts_of_size(&ints, k) {
            Ok(pairs) => {
                let (support, counts): (Vec<f64>, Vec<BigUint>) =
                    pairs.into_iter().map(|(s, c)| (s as f64, c)).unzip();
                return Ok(finish(k, support, counts, subsets));
            }
            Err(Error::TableTooLarge { .. }) => {}
            Err(e) => return Err(e),
        }
    }

    let budget_ok = u64::try_from(&subsets).is_ok_and(|c| c <= PMF_SUBSET_BUDGET);
    if !budget_ok {
        return Err(Error::SubsetBudget { n, k, budget: PMF_SUBSET_BUDGET });
    }
    let mut sums = combination_sums(set, k);
    sums.sort_by(f64::total_cmp);

    let mut support: Vec<f64> = Vec::new();
    let mut tallies: Vec<u64> = Vec::new();
    for s in sums {
        match support.last() {
            Some(&first) if s - first <= PMF_GROUPING_TOLERANCE => *tallies.last_mut().unwrap() += 1,
            _ => {
                support.push(s);
                tallies.push(1);
            }
        }
    }
    let counts = tallies.into_iter().map(BigUint::from).collect();
    Ok(finish(k, support, counts, subsets))
}

fn finish(k: usize, support: Vec<f64>, counts: Vec<BigUint>, subsets: BigUint) -> ExactSumPmf {
    let mass = counts.iter().map(|c| ratio_to_f64(c, &subsets)).collect();
    ExactSumPmf { k, support, mass, counts, subsets }
}

/// Sums of all `k`-combinations in lexicographic index order, with partial
/// sums kept per depth so each step re-adds only the changed suffix.
pub(crate) fn combination_sums(set: &[f64], k: usize) -> Vec<f64> {
    let n = set.len();
    let mut idx: Vec<usize> = (0..k).collect();
    let mut partial = vec![0.0; k];
    let refill = |idx: &[usize], partial: &mut [f64], from: usize| {
        for j in from..idx.len() {
            let before = if j == 0 { 0.0 } else { partial[j - 1] };
            partial[j] = before + set[idx[j]];
        }
    };
    refill(&idx, &mut partial, 0);
    let mut out = Vec::new();
    loop {
        out.push(partial[k - 1]);
        // rightmost index that can still advance
        let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
            break;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
        refill(&idx, &mut partial, i);
    }
    out
}
