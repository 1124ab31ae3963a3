use num_bigint::BigUint;
use rayon::prelude::*;

use super::CountBySize;
use crate::error::{Error, Result};
use crate::moments::check_values;
use crate::Relation;

/// Largest set enumerated by default (2^26 ≈ 6.7e7 subsets).
pub const DEFAULT_ENUMERATION_CAP: usize = 26;

/// Hard ceiling regardless of the configured cap; masks are `u64`.
const ABSOLUTE_CAP: usize = 40;

/// Counts qualifying subsets of every size by visiting all `2^n` subsets.
pub fn enumerate_counts(set: &[f64], target: f64, relation: Relation, tolerance: f64) -> Result<CountBySize> {
    enumerate_counts_capped(set, target, relation, tolerance, DEFAULT_ENUMERATION_CAP)
}

/// As [`enumerate_counts`] with an explicit size cap.
///
/// Subset sums are formed as `high_half_sum + low_half_sum`, with both halves
/// tabulated incrementally (`sum[m] = sum[m & (m-1)] + x[lowest bit of m]`).
/// Each subset therefore costs one addition, and every sum has a fixed
/// evaluation order no matter how the work is split across threads.
pub fn enumerate_counts_capped(
    set: &[f64],
    target: f64,
    relation: Relation,
    tolerance: f64,
    cap: usize,
) -> Result<CountBySize> {
    check_values(set)?;
    if target.is_nan() {
        return Err(Error::domain("target is NaN"));
    }
    if !(tolerance >= 0.0) {
        return Err(Error::domain("tolerance must be non-negative"));
    }
    let n = set.len();
    let cap = cap.min(ABSOLUTE_CAP);
    if n > cap {
        return Err(Error::TooLarge { n, cap });
    }

    let low_bits = n / 2;
    let (low, high) = set.split_at(low_bits);
    let low_table = half_table(low);
    let high_table = half_table(high);

    let per_size = match relation {
        Relation::Eq => scan(&low_table, &high_table, n, |s| (s - target).abs() <= tolerance),
        Relation::Ge => scan(&low_table, &high_table, n, |s| s >= target),
        Relation::Le => scan(&low_table, &high_table, n, |s| s <= target),
    };
    Ok(CountBySize::from_counts(per_size[1..=n].iter().map(|&c| BigUint::from(c)).collect()))
}

struct HalfTable {
    sums: Vec<f64>,
    sizes: Vec<u8>,
}

fn half_table(values: &[f64]) -> HalfTable {
    let len = 1usize << values.len();
    let mut sums = vec![0.0; len];
    let mut sizes = vec![0u8; len];
    for m in 1..len {
        let rest = m & (m - 1);
        sums[m] = sums[rest] + values[m.trailing_zeros() as usize];
        sizes[m] = sizes[rest] + 1;
    }
    HalfTable { sums, sizes }
}

fn scan<F>(low: &HalfTable, high: &HalfTable, n: usize, qualifies: F) -> Vec<u64>
where
    F: Fn(f64) -> bool + Sync,
{
    (0..high.sums.len())
        .into_par_iter()
        .fold(
            || vec![0u64; n + 1],
            |mut acc, h| {
                let hs = high.sums[h];
                let hk = high.sizes[h] as usize;
                for (ls, &lk) in low.sums.iter().zip(&low.sizes) {
                    if qualifies(hs + ls) {
                        acc[hk + lk as usize] += 1;
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; n + 1],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::binomial;

    /// Direct bitmask sum for every subset; no shared tables.
    fn naive(set: &[f64], target: f64, rel: Relation, tol: f64) -> Vec<u64> {
        let n = set.len();
        let mut out = vec![0u64; n];
        for m in 1u64..(1 << n) {
            let s: f64 = (0..n).filter(|i| m >> i & 1 == 1).map(|i| set[i]).sum();
            if rel.holds(s, target, tol) {
                out[m.count_ones() as usize - 1] += 1;
            }
        }
        out
    }

    fn as_u64(c: &CountBySize) -> Vec<u64> {
        c.counts().iter().map(|x| u64::try_from(x).unwrap()).collect()
    }

    #[test]
    fn small_examples() {
        let s = [1.0, 2.0, 3.0, 4.0];
        let eq = enumerate_counts(&s, 5.0, Relation::Eq, 0.0).unwrap();
        assert_eq!(as_u64(&eq), vec![0, 2, 0, 0]);
        assert_eq!(eq.total(), &BigUint::from(2u32));
        let ge = enumerate_counts(&s, 5.0, Relation::Ge, 0.0).unwrap();
        assert_eq!(as_u64(&ge), vec![0, 4, 4, 1]);
        assert_eq!(ge.total(), &BigUint::from(9u32));
    }

    #[test]
    fn target_below_everything() {
        let s = [3.5, 9.0, 4.25, 7.0, 5.0, 6.5, 8.0];
        let c = enumerate_counts(&s, 1.0, Relation::Ge, 0.0).unwrap();
        for k in 1..=7 {
            assert_eq!(c.get(k), binomial(7, k as u64));
        }
    }

    #[test]
    fn matches_naive_on_reals() {
        let s = [0.1, 0.7, 0.2, 1.3, -0.4, 2.2, 0.9, 0.3, -1.1];
        for rel in [Relation::Eq, Relation::Ge, Relation::Le] {
            for (t, tol) in [(1.02, 0.05), (0.03, 0.15), (2.55, 0.0)] {
                let got = enumerate_counts(&s, t, rel, tol).unwrap();
                assert_eq!(as_u64(&got), naive(&s, t, rel, tol), "{rel} {t}");
            }
        }
    }

    #[test]
    fn errors() {
        let big = vec![1.0; 27];
        assert_eq!(
            enumerate_counts(&big, 1.0, Relation::Eq, 0.0),
            Err(Error::TooLarge { n: 27, cap: 26 })
        );
        assert!(enumerate_counts_capped(&big, 1.0, Relation::Eq, 0.0, 27).is_ok());
        assert_eq!(
            enumerate_counts(&[1.0, f64::NAN], 1.0, Relation::Eq, 0.0),
            Err(Error::NonFinite { index: 1 })
        );
        assert_eq!(enumerate_counts(&[], 1.0, Relation::Eq, 0.0), Err(Error::EmptySet));
    }
}
