//! Small helpers around `BigUint` that the rest of the crate shares.

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};

/// `num / den` as the nearest-ish `f64` (about 60 correct bits), without
/// overflowing when both operands exceed the `f64` range.
pub fn ratio_to_f64(num: &BigUint, den: &BigUint) -> f64 {
    assert!(!den.is_zero(), "ratio with zero denominator");
    if num.is_zero() {
        return 0.0;
    }
    // scale so the integer quotient carries ~64 significant bits
    let shift = 64 + den.bits() as i64 - num.bits() as i64;
    let q = if shift >= 0 {
        (num << shift as u64) / den
    } else {
        num / (den << (-shift) as u64)
    };
    let q = q.to_f64().unwrap_or(f64::INFINITY);
    scale_pow2(q, -shift)
}

/// `x * 2^e` without intermediate overflow or underflow for large |e|.
pub fn scale_pow2(mut x: f64, mut e: i64) -> f64 {
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
    }
    x * 2f64.powi(e as i32)
}

/// log10 of a big integer; `-inf` for zero.
pub fn log10(x: &BigUint) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().map(f64::log10).unwrap_or(f64::INFINITY);
    }
    let shift = bits - 64;
    let top = (x >> shift).to_f64().unwrap();
    top.log10() + shift as f64 * std::f64::consts::LOG10_2
}

/// Exact decomposition of a finite, non-negative `f64` as `mantissa * 2^exp`.
pub fn decompose(p: f64) -> (u64, i64) {
    debug_assert!(p.is_finite() && p >= 0.0);
    if p == 0.0 {
        return (0, 0);
    }
    let bits = p.to_bits();
    let exp_bits = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mant, exp) = if exp_bits == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp_bits - 1075)
    };
    let tz = mant.trailing_zeros() as i64;
    (mant >> tz, exp + tz)
}

/// `round_half_even(p * c)` computed exactly from the binary expansion of `p`.
pub fn scale_round_half_even(c: &BigUint, p: f64) -> BigUint {
    assert!(p.is_finite() && p >= 0.0, "probability must be finite and non-negative");
    let (mant, exp) = decompose(p);
    if mant == 0 || c.is_zero() {
        return BigUint::zero();
    }
    let prod = c * mant;
    if exp >= 0 {
        return prod << exp as u64;
    }
    let s = (-exp) as u64;
    let q = &prod >> s;
    let half_bit = prod.bit(s - 1);
    if !half_bit {
        return q;
    }
    // strictly above half, or exactly half with an odd quotient, rounds up
    let sticky = prod.trailing_zeros().is_some_and(|tz| tz < s - 1);
    if sticky || q.bit(0) {
        q + 1u32
    } else {
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_matches_small_cases() {
        let r = ratio_to_f64(&BigUint::from(1u32), &BigUint::from(3u32));
        assert!((r - 1.0 / 3.0).abs() < 1e-16);
        let big = BigUint::from(7u32) << 5000u32;
        let den = BigUint::from(3u32) << 5000u32;
        assert!((ratio_to_f64(&big, &den) - 7.0 / 3.0).abs() < 1e-15);
        let tiny = ratio_to_f64(&BigUint::from(1u32), &(BigUint::from(1u32) << 1070u32));
        assert!(tiny > 0.0 && tiny < 1e-300);
    }

    #[test]
    fn decompose_roundtrip() {
        for p in [0.5, 0.3015, 1.0, 1e-300, 5e-324, 0.999999999, 123456.75] {
            let (m, e) = decompose(p);
            assert_eq!(scale_pow2(m as f64, e), p);
        }
    }

    #[test]
    fn half_even_rounding() {
        let c = BigUint::from(10u32);
        assert_eq!(scale_round_half_even(&c, 0.25), BigUint::from(2u32)); // 2.5 -> 2
        assert_eq!(scale_round_half_even(&c, 0.35), BigUint::from(3u32)); // 0.35 is just below 7/20
        assert_eq!(scale_round_half_even(&BigUint::from(6u32), 0.25), BigUint::from(2u32)); // 1.5 -> 2
        assert_eq!(scale_round_half_even(&c, 1.0), c);
        assert_eq!(scale_round_half_even(&c, 0.0), BigUint::zero());
        assert_eq!(scale_round_half_even(&BigUint::from(3u32), 0.5), BigUint::from(2u32)); // 1.5 -> 2
        assert_eq!(scale_round_half_even(&BigUint::from(5u32), 0.5), BigUint::from(2u32)); // 2.5 -> 2
    }

    #[test]
    fn log10_of_large_values() {
        let x = BigUint::from(10u32).pow(400);
        assert!((log10(&x) - 400.0).abs() < 1e-9);
        assert_eq!(log10(&BigUint::from(1000u32)), 3.0);
    }
}
