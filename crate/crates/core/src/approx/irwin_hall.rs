//! Irwin–Hall (sum of `k` standard uniforms) evaluated exactly.
//!
//! The textbook piecewise polynomial
//! `F(u) = (1/k!) Σ_{j <= floor(u)} (-1)^j C(k, j) (u - j)^k`
//! cancels catastrophically in `f64` once `k` passes ~20. Every finite `f64`
//! is a dyadic rational, so the alternating sum is carried out in big-integer
//! arithmetic and only the final ratio is rounded.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Signed, Zero};

use crate::bigutil::{decompose, ratio_to_f64};
use crate::exact::binomial;

/// Largest `k` evaluated by the exact formula; beyond it the law is replaced
/// by its matching normal.
pub const IRWIN_HALL_EXACT_MAX_K: usize = 40;

/// `Σ_{j <= floor(u)} (-1)^j C(k, j) (u - j)^power / power!` for `0 <= u`.
fn alternating_sum(u: f64, k: usize, power: u32) -> f64 {
    debug_assert!(u >= 0.0 && u.is_finite());
    if u == 0.0 {
        return if power == 0 { 1.0 } else { 0.0 };
    }
    let (mant, exp) = decompose(u);
    let shift = if exp < 0 { (-exp) as u64 } else { 0 };
    let scaled_u = BigInt::from(mant) << (if exp > 0 { exp as u64 } else { 0 });
    let unit = BigInt::one() << shift;
    let last = (u.floor() as usize).min(k);

    let mut numerator = BigInt::zero();
    for j in 0..=last {
        let base = &scaled_u - &unit * j;
        if base.sign() != Sign::Plus && power > 0 {
            // u == j exactly contributes nothing for power > 0
            continue;
        }
        let term = BigInt::from(binomial(k as u64, j as u64)) * base.pow(power);
        if j % 2 == 0 {
            numerator += term;
        } else {
            numerator -= term;
        }
    }
    if numerator.is_negative() || numerator.is_zero() {
        return 0.0;
    }
    let factorial: BigUint = (1..=power as u64).map(BigUint::from).product();
    let denominator = factorial << (shift * power as u64);
    ratio_to_f64(numerator.magnitude(), &denominator)
}

/// CDF of the standard Irwin–Hall law with `k` terms.
pub fn standard_cdf(u: f64, k: usize) -> f64 {
    let kf = k as f64;
    if u <= 0.0 {
        return 0.0;
    }
    if u >= kf {
        return 1.0;
    }
    if u <= kf / 2.0 {
        alternating_sum(u, k, k as u32)
    } else {
        1.0 - alternating_sum(kf - u, k, k as u32)
    }
}

/// Survival function `P(U > u)`, computed on the short tail for accuracy.
pub fn standard_sf(u: f64, k: usize) -> f64 {
    let kf = k as f64;
    if u <= 0.0 {
        return 1.0;
    }
    if u >= kf {
        return 0.0;
    }
    if u >= kf / 2.0 {
        alternating_sum(kf - u, k, k as u32)
    } else {
        1.0 - alternating_sum(u, k, k as u32)
    }
}

/// Density of the standard Irwin–Hall law.
pub fn standard_pdf(u: f64, k: usize) -> f64 {
    let kf = k as f64;
    if u < 0.0 || u > kf {
        return 0.0;
    }
    if k == 1 {
        return 1.0;
    }
    // the density is symmetric about k/2
    let v = if u > kf / 2.0 { kf - u } else { u };
    alternating_sum(v, k, k as u32 - 1)
}
