use std::ops::AddAssign;

use num_bigint::BigUint;
use num_traits::{One, Zero};

use super::{binomial, CountBySize};
use crate::error::{Error, Result};
use crate::moments::check_values;
use crate::Relation;

/// Maximum number of `(size, partial sum)` cells in one table.
pub const DP_CELL_LIMIT: u128 = 1 << 23;

/// Counts `k`-subsets of an integer set satisfying `sum <relation> target`.
pub fn dp_counts(set: &[i64], target: i64, relation: Relation) -> Result<CountBySize> {
    match relation {
        Relation::Eq => dp_interval_counts(set, Some(target), Some(target)),
        Relation::Ge => dp_interval_counts(set, Some(target), None),
        Relation::Le => dp_interval_counts(set, None, Some(target)),
    }
}

/// Real-valued front end: the set must be integer-valued, the target and
/// tolerance may be arbitrary and are mapped to an integer sum interval.
pub fn dp_counts_real(set: &[f64], target: f64, relation: Relation, tolerance: f64) -> Result<CountBySize> {
    check_values(set)?;
    let ints = integer_values(set).ok_or_else(|| Error::domain("dynamic programming needs integer-valued elements"))?;
    if !target.is_finite() || !(tolerance >= 0.0) {
        return Err(Error::domain("target must be finite and tolerance non-negative"));
    }
    let (lo, hi) = match relation {
        Relation::Eq => (Some((target - tolerance).ceil()), Some((target + tolerance).floor())),
        Relation::Ge => (Some(target.ceil()), None),
        Relation::Le => (None, Some(target.floor())),
    };
    // saturate into i64 range; sums of i64 elements that fit a table never get near it
    let clamp = |v: f64| v.clamp(i64::MIN as f64 / 4.0, i64::MAX as f64 / 4.0) as i64;
    dp_interval_counts(&ints, lo.map(clamp), hi.map(clamp))
}

/// `Some` when every element is an integer of magnitude at most 2^53.
pub fn integer_values(set: &[f64]) -> Option<Vec<i64>> {
    const LIMIT: f64 = 9_007_199_254_740_992.0;
    set.iter()
        .map(|&x| (x.is_finite() && x.fract() == 0.0 && x.abs() <= LIMIT).then_some(x as i64))
        .collect()
}

/// Counts `k`-subsets whose sum lies in `[lo, hi]` (either end may be open).
///
/// The table is indexed by `(k, partial sum)`. With non-negative elements the
/// sum axis stops at the largest value the query can distinguish: sums above
/// a finite `hi` are dropped, and for an open `hi` everything at or above `lo`
/// collapses into one saturating bucket. All-non-positive sets are mirrored;
/// mixed-sign sets use the full offset axis.
pub fn dp_interval_counts(set: &[i64], lo: Option<i64>, hi: Option<i64>) -> Result<CountBySize> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    let n = set.len();
    if let (Some(l), Some(h)) = (lo, hi) {
        if l > h {
            return Ok(CountBySize::from_counts(vec![BigUint::zero(); n]));
        }
    }
    let all_nonneg = set.iter().all(|&x| x >= 0);
    if !all_nonneg && set.iter().all(|&x| x <= 0) {
        let mirrored: Vec<i64> = set.iter().map(|&x| -x).collect();
        return dp_interval_counts(&mirrored, hi.map(|h| -h), lo.map(|l| -l));
    }
    let lo = lo.map(i128::from);
    let hi = hi.map(i128::from);

    let plan = if all_nonneg {
        let total: i128 = set.iter().map(|&x| i128::from(x)).sum();
        match hi {
            Some(h) if h < 0 => return Ok(CountBySize::from_counts(vec![BigUint::zero(); n])),
            Some(h) => Axis { origin: 0, width: h.min(total) + 1, saturate: false },
            None => {
                let floor = lo.unwrap_or(0).max(0);
                Axis { origin: 0, width: floor.min(total) + 1, saturate: true }
            }
        }
    } else {
        let min: i128 = set.iter().filter(|&&x| x < 0).map(|&x| i128::from(x)).sum();
        let max: i128 = set.iter().filter(|&&x| x > 0).map(|&x| i128::from(x)).sum();
        Axis { origin: min, width: max - min + 1, saturate: false }
    };

    let cells = (n as u128 + 1) * plan.width as u128;
    if cells > DP_CELL_LIMIT {
        return Err(Error::TableTooLarge { cells, limit: DP_CELL_LIMIT });
    }
    // query window in axis coordinates
    let first = lo.map_or(0, |l| (l - plan.origin).max(0));
    let last = hi.map_or(plan.width - 1, |h| (h - plan.origin).min(plan.width - 1));
    let window = (first <= last).then_some(first as usize..=last as usize);
    let counts = if n < 128 {
        window_totals(run::<u128>(set, &plan, n), window)
    } else {
        window_totals(run::<BigUint>(set, &plan, n), window)
    };
    Ok(CountBySize::from_counts(counts))
}

/// Exact number of `k`-subsets attaining each achievable sum, as
/// `(sum, count)` pairs in increasing sum order.
pub(crate) fn sum_counts_of_size(set: &[i64], k: usize) -> Result<Vec<(i64, BigUint)>> {
    let n = set.len();
    // any subset of at most k elements sums inside [min, max]
    let mut sorted: Vec<i128> = set.iter().map(|&x| i128::from(x)).collect();
    sorted.sort_unstable();
    let min: i128 = sorted.iter().take(k).filter(|&&x| x < 0).sum();
    let max: i128 = sorted.iter().rev().take(k).filter(|&&x| x > 0).sum();
    let axis = Axis { origin: min, width: max - min + 1, saturate: false };
    let cells = (k as u128 + 1) * axis.width as u128;
    if cells > DP_CELL_LIMIT {
        return Err(Error::TableTooLarge { cells, limit: DP_CELL_LIMIT });
    }
    // row j never holds more than C(n, j) subsets
    let widest = binomial(n as u64, k.min(n / 2) as u64);
    let row: Vec<BigUint> = if widest.bits() < 128 {
        run::<u128>(set, &axis, k).swap_remove(k).into_iter().map(Into::into).collect()
    } else {
        run::<BigUint>(set, &axis, k).swap_remove(k)
    };
    Ok(row
        .into_iter()
        .enumerate()
        .filter(|(_, c)| !c.is_zero())
        .map(|(i, c)| ((i as i128 + axis.origin) as i64, c))
        .collect())
}

fn window_totals<C: Cell>(rows: Vec<Vec<C>>, window: Option<std::ops::RangeInclusive<usize>>) -> Vec<BigUint> {
    rows.into_iter()
        .skip(1)
        .map(|row| match &window {
            Some(w) => row[w.clone()].iter().fold(BigUint::zero(), |acc, c| acc + c.clone().into()),
            None => BigUint::zero(),
        })
        .collect()
}

struct Axis {
    origin: i128,
    width: i128,
    saturate: bool,
}

trait Cell: Clone + Zero + One + for<'a> AddAssign<&'a Self> + Into<BigUint> {}
impl<T: Clone + Zero + One + for<'a> AddAssign<&'a T> + Into<BigUint>> Cell for T {}

/// Rows `0..=max_k` of the `(size, sum)` table.
fn run<C: Cell>(set: &[i64], axis: &Axis, max_k: usize) -> Vec<Vec<C>> {
    let width = axis.width as usize;
    let mut rows: Vec<Vec<C>> = vec![vec![C::zero(); width]; max_k + 1];
    let zero_at = (-axis.origin) as usize;
    if zero_at < width {
        rows[0][zero_at] = C::one();
    }
    for (i, &x) in set.iter().enumerate() {
        let x = x as i128;
        for k in (0..=i.min(max_k - 1)).rev() {
            let (below, above) = rows.split_at_mut(k + 1);
            let src = &below[k];
            let dst = &mut above[0];
            for (s, c) in src.iter().enumerate() {
                if c.is_zero() {
                    continue;
                }
                let d = s as i128 + x;
                let d = if d >= axis.width {
                    if axis.saturate {
                        axis.width - 1
                    } else {
                        continue;
                    }
                } else {
                    d
                };
                dst[d as usize] += c;
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{binomial, enumerate_counts};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn as_f64(set: &[i64]) -> Vec<f64> {
        set.iter().map(|&x| x as f64).collect()
    }

    #[test]
    fn small_examples() {
        let s = [1, 2, 3, 4];
        let eq = dp_counts(&s, 5, Relation::Eq).unwrap();
        assert_eq!(eq, enumerate_counts(&as_f64(&s), 5.0, Relation::Eq, 0.0).unwrap());
        assert_eq!(eq.total(), &BigUint::from(2u32));
        let ge = dp_counts(&s, 5, Relation::Ge).unwrap();
        assert_eq!(ge.total(), &BigUint::from(9u32));
        let zeros = dp_counts(&[0, 0], 0, Relation::Eq).unwrap();
        assert_eq!(zeros.counts(), &[BigUint::from(2u32), BigUint::from(1u32)]);
    }

    #[test]
    fn signed_and_mirrored_sets() {
        for set in [vec![-3, 5, 2, -1, 0, 4, -2], vec![-1, -4, -2, -2, -7], vec![0, 0, 0]] {
            let f = as_f64(&set);
            for t in -8..=8 {
                for rel in [Relation::Eq, Relation::Ge, Relation::Le] {
                    assert_eq!(
                        dp_counts(&set, t, rel).unwrap(),
                        enumerate_counts(&f, t as f64, rel, 0.0).unwrap(),
                        "{set:?} {rel} {t}"
                    );
                }
            }
        }
    }

    #[test]
    fn real_front_end_maps_intervals() {
        let s = [1.0, 2.0, 3.0, 4.0, 7.0];
        for (t, tol) in [(5.5, 0.0), (5.5, 0.5), (6.0, 1.25), (-1.0, 0.0)] {
            for rel in [Relation::Eq, Relation::Ge, Relation::Le] {
                assert_eq!(
                    dp_counts_real(&s, t, rel, tol).unwrap(),
                    enumerate_counts(&s, t, rel, tol).unwrap(),
                    "{rel} {t} {tol}"
                );
            }
        }
        assert!(dp_counts_real(&[1.5, 2.0], 1.0, Relation::Eq, 0.0).is_err());
    }

    #[test]
    fn big_sets_use_big_cells() {
        let set = vec![1i64; 140];
        let c = dp_counts(&set, 70, Relation::Eq).unwrap();
        assert_eq!(c.get(70), binomial(140, 70));
        assert_eq!(c.get(69), BigUint::zero());
        let ge = dp_counts(&set, 0, Relation::Ge).unwrap();
        assert_eq!(ge.total(), &((BigUint::from(1u32) << 140u32) - 1u32));
    }

    #[test]
    fn table_limit() {
        let set = vec![1_000_000_000i64, 3];
        assert!(matches!(dp_counts(&set, 2_000_000_000, Relation::Le), Err(Error::TableTooLarge { .. })));
        // saturation keeps `ge` narrow no matter how large the elements are
        assert!(dp_counts(&set, 5, Relation::Ge).is_ok());
    }

    #[test]
    fn seeded_agreement_with_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for case in 0..40 {
            let n = rng.random_range(1..=14);
            let set: Vec<i64> = (0..n).map(|_| rng.random_range(0..=50)).collect();
            let t = rng.random_range(0..=(25 * n as i64));
            let rel = [Relation::Eq, Relation::Ge, Relation::Le][case % 3];
            assert_eq!(
                dp_counts(&set, t, rel).unwrap(),
                enumerate_counts(&as_f64(&set), t as f64, rel, 0.0).unwrap(),
                "case {case}"
            );
        }
    }
}
