//! Exact totals `Σ_k count_k` where most counts are `0`, `C(n, k)` or
//! `round(P·C(n, k))`, without building every `C(n, k)`.
//!
//! Runs of full strata become prefix-sum differences `F(b) - F(a-1)` with
//! `F(x) = Σ_{j<=x} C(n, j)`. `F` is known at three anchors (`0`, `n/2`, `n`).
//! Everything reached from one anchor is a single weighted sum
//! `Σ_t c_t C(n, A ± t)`, evaluated by binary splitting over the ratios
//! `C(n, j±1) / C(n, j)` followed by one exact division. Rounding a fractional
//! stratum only needs the low bits of its binomial, which are carried
//! 2-adically along the walk.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};

use crate::bigutil::decompose;
use crate::exact::binomial;

/// What one stratum contributes to the total.
#[derive(Debug, Clone, PartialEq)]
pub enum Share {
    Zero,
    /// Every `k`-subset qualifies.
    All,
    /// `round_half_even(p · C(n, k))` for `0 < p < 1`.
    Fraction(f64),
    Exact(BigUint),
}

impl Share {
    pub fn from_probability(p: f64) -> Self {
        if p <= 0.0 {
            Share::Zero
        } else if p >= 1.0 {
            Share::All
        } else {
            Share::Fraction(p)
        }
    }
}

/// `m · 2^e`.
#[derive(Debug, Clone, PartialEq)]
struct Dyadic {
    m: BigInt,
    e: i64,
}

impl Dyadic {
    fn zero() -> Self {
        Dyadic { m: BigInt::zero(), e: 0 }
    }

    fn int(m: impl Into<BigInt>) -> Self {
        Dyadic { m: m.into(), e: 0 }
    }

    fn add(self, other: Dyadic) -> Dyadic {
        if other.m.is_zero() {
            return self;
        }
        if self.m.is_zero() {
            return other;
        }
        let (lo, hi) = if self.e <= other.e { (self, other) } else { (other, self) };
        Dyadic { m: lo.m + (hi.m << (hi.e - lo.e) as usize), e: lo.e }
    }

    fn mul(&self, x: &BigInt) -> Dyadic {
        if self.m.is_zero() {
            return Dyadic::zero();
        }
        Dyadic { m: &self.m * x, e: self.e }
    }

    /// The value, which must be an integer.
    fn into_integer(self) -> BigInt {
        if self.e >= 0 {
            return self.m << self.e as usize;
        }
        let s = self.e.unsigned_abs();
        debug_assert!(self.m.trailing_zeros().is_none_or(|tz| tz >= s), "not an integer");
        self.m >> s as usize
    }
}

/// Inverse of an odd `d` modulo 2^64 by Newton iteration.
fn inverse_mod_word(d: u64) -> u64 {
    let mut x = d; // correct to 3 bits
    for _ in 0..5 {
        x = x.wrapping_mul(2u64.wrapping_sub(d.wrapping_mul(x)));
    }
    x
}

/// `C(n, j)` modulo `2^(64·len)`, kept as an odd part and a power of two so
/// that stepping `j` only needs odd multiplications and inverses.
struct LowBits {
    odd: Vec<u64>,
    twos: u64,
}

impl LowBits {
    fn new(c: &BigUint, len: usize) -> Self {
        let twos = c.trailing_zeros().expect("binomials are positive");
        let mut odd = (c >> twos).to_u64_digits();
        odd.resize(len, 0);
        LowBits { odd, twos }
    }

    /// Multiplies by `p / q`.
    fn step(&mut self, p: u64, q: u64) {
        self.twos = self.twos + p.trailing_zeros() as u64 - q.trailing_zeros() as u64;
        let (p, q) = (p >> p.trailing_zeros(), q >> q.trailing_zeros());
        let mut carry = 0u64;
        for limb in self.odd.iter_mut() {
            let t = *limb as u128 * p as u128 + carry as u128;
            *limb = t as u64;
            carry = (t >> 64) as u64;
        }
        if q == 1 {
            return;
        }
        // Hensel division: the 2-adic quotient, truncated like the rest
        let inv = inverse_mod_word(q);
        let mut borrow = 0u64;
        for limb in self.odd.iter_mut() {
            let (s, under) = limb.overflowing_sub(borrow);
            let x = s.wrapping_mul(inv);
            *limb = x;
            borrow = ((x as u128 * q as u128) >> 64) as u64 + under as u64;
        }
    }

    /// The value modulo `2^bits`, for `bits <= 64·len`.
    fn low(&self, bits: u64) -> BigUint {
        if self.twos >= bits {
            return BigUint::zero();
        }
        let digits: Vec<u32> = self.odd.iter().flat_map(|&w| [w as u32, (w >> 32) as u32]).collect();
        mask(&(BigUint::new(digits) << self.twos), bits)
    }
}

fn mask(x: &BigUint, bits: u64) -> BigUint {
    if x.bits() <= bits {
        x.clone()
    } else {
        x & ((BigUint::one() << bits) - 1u32)
    }
}

/// `round_half_even(mant · 2^exp · C) - mant · 2^exp · C` from the low bits of `C`.
fn rounding_delta(mant: u64, exp: i64, c: &LowBits) -> Dyadic {
    debug_assert!(exp < 0);
    let s = exp.unsigned_abs();
    let prod = mask(&(c.low(s + 1) * mant), s + 1);
    let below = mask(&prod, s);
    let half = below.bit(s - 1);
    let sticky = mask(&below, s - 1) != BigUint::zero();
    let up = half && (sticky || prod.bit(s));
    let m = if up { BigInt::from(BigUint::one() << s) - BigInt::from(below) } else { -BigInt::from(below) };
    Dyadic { m, e: exp }
}

#[derive(Clone, Copy, PartialEq)]
enum Need {
    /// `F(position)` enters the total with this sign.
    Prefix(bool),
    Fraction(f64),
}

struct Anchor {
    at: u64,
    prefix: BigUint,
    cursor: BigUint,
}

/// Sum of all shares for strata `k` (ascending, any subset of `1..=n`).
pub fn tally(n: u64, shares: &[(u64, Share)]) -> BigUint {
    let mut exact_sum = BigUint::zero();
    let mut needs: Vec<(u64, Need)> = Vec::new();
    let mut run_start: Option<u64> = None;
    let mut prev_k: Option<u64> = None;
    let close_run = |start: u64, end: u64, needs: &mut Vec<(u64, Need)>| {
        needs.push((end, Need::Prefix(true)));
        needs.push((start - 1, Need::Prefix(false)));
    };
    for (k, share) in shares {
        let k = *k;
        debug_assert!(k >= 1 && k <= n);
        let contiguous = prev_k.is_some_and(|p| p + 1 == k);
        if let Some(start) = run_start {
            if !(matches!(share, Share::All) && contiguous) {
                close_run(start, prev_k.unwrap(), &mut needs);
                run_start = None;
            }
        }
        match share {
            Share::Zero => {}
            Share::All => {
                if run_start.is_none() {
                    run_start = Some(k);
                }
            }
            Share::Fraction(p) => {
                debug_assert!(*p > 0.0 && *p < 1.0);
                needs.push((k, Need::Fraction(*p)));
            }
            Share::Exact(c) => exact_sum += c,
        }
        prev_k = Some(k);
    }
    if let Some(start) = run_start {
        close_run(start, prev_k.unwrap(), &mut needs);
    }
    needs.sort_by_key(|(k, _)| *k);

    let mid = n / 2;
    let (left, right): (Vec<_>, Vec<_>) = needs.into_iter().partition(|(k, _)| *k <= mid);
    let left_cut = cut(&left, 0, mid);
    let right_cut = cut(&right, mid, n);
    let mid_needed = left_cut < left.len() || right_cut > 0;
    let mid_anchor = mid_needed.then(|| {
        let c = binomial(n, mid);
        let pow = BigUint::one() << n;
        // F(n/2) from the symmetry C(n, j) = C(n, n - j)
        let prefix = if n % 2 == 1 { pow >> 1u32 } else { (pow + &c) >> 1u32 };
        Anchor { at: mid, prefix, cursor: c }
    });
    let zero = Anchor { at: 0, prefix: BigUint::one(), cursor: BigUint::one() };
    let top = Anchor { at: n, prefix: BigUint::one() << n, cursor: BigUint::one() };

    let mut total = Dyadic::int(exact_sum);
    let walks = [
        (&zero, true, &left[..left_cut]),
        (mid_anchor.as_ref().unwrap_or(&zero), false, &left[left_cut..]),
        (mid_anchor.as_ref().unwrap_or(&zero), true, &right[..right_cut]),
        (&top, false, &right[right_cut..]),
    ];
    for (anchor, upward, needs) in walks {
        if !needs.is_empty() {
            total = total.add(walk(n, anchor, upward, needs));
        }
    }
    total.into_integer().to_biguint().expect("subset total cannot be negative")
}

/// Index splitting `needs` into an upward walk from `lo` and a downward walk
/// from `hi` with the fewest total steps.
fn cut(needs: &[(u64, Need)], lo: u64, hi: u64) -> usize {
    if needs.is_empty() {
        return 0;
    }
    let cost = |i: usize| -> u64 {
        let up = if i == 0 { 0 } else { needs[i - 1].0 - lo };
        let down = if i == needs.len() { 0 } else { hi - needs[i].0 };
        up + down
    };
    (0..=needs.len()).min_by_key(|&i| cost(i)).unwrap()
}

/// Contribution of `needs` (ascending positions, all on one side of the
/// anchor) as `Σ_t c_t C(n, A ± t)` plus anchor multiples and rounding.
fn walk(n: u64, anchor: &Anchor, upward: bool, needs: &[(u64, Need)]) -> Dyadic {
    let a = anchor.at;
    let dist = |k: u64| if upward { k - a } else { a - k };
    let d = needs.iter().map(|&(k, _)| dist(k)).max().unwrap_or(0) as usize;
    // C(n, A ± (t - 1)) -> C(n, A ± t) is a multiplication by p/q
    let ratio = |t: u64| if upward { (n - a - t + 1, a + t) } else { (a - t + 1, n - a + t) };

    let mut weight_steps = vec![0i64; d + 2];
    let mut fractions: Vec<(usize, u64, i64)> = Vec::new();
    let mut anchor_times = 0i64;
    for &(k, need) in needs {
        let t = dist(k) as usize;
        match need {
            Need::Prefix(positive) => {
                let s = if positive { 1 } else { -1 };
                anchor_times += s;
                // upward F(k) = F(A) + Σ_{1<=i<=t}; downward F(k) = F(A) - Σ_{0<=i<t}
                if upward {
                    weight_steps[1] += s;
                    weight_steps[t + 1] -= s;
                } else {
                    weight_steps[0] -= s;
                    weight_steps[t] += s;
                }
            }
            Need::Fraction(p) => {
                let (mant, exp) = decompose(p);
                fractions.push((t, mant, exp));
            }
        }
    }
    let mut coeffs: Vec<Dyadic> = Vec::with_capacity(d + 1);
    let mut w = 0i64;
    for step in &weight_steps[..=d] {
        w += step;
        coeffs.push(Dyadic::int(w));
    }
    for &(t, mant, exp) in &fractions {
        let c = std::mem::replace(&mut coeffs[t], Dyadic::zero());
        coeffs[t] = c.add(Dyadic { m: mant.into(), e: exp });
    }

    let cursor = BigInt::from(anchor.cursor.clone());
    let mut sum = Dyadic::int(BigInt::from(anchor.prefix.clone()) * anchor_times).add(coeffs[0].mul(&cursor));
    if d > 0 {
        let ratios: Vec<(u64, u64)> = (1..=d as u64).map(ratio).collect();
        let (_, q, t) = split(&ratios, &coeffs[1..], false);
        let (quotient, rem) = num_integer::Integer::div_rem(&(&cursor * &t.m), &q);
        debug_assert!(rem.is_zero(), "binomial sum division was not exact");
        sum = sum.add(Dyadic { m: quotient, e: t.e });
    }

    if let Some(&(last, ..)) = fractions.iter().max_by_key(|f| f.0) {
        let max_bits = fractions.iter().map(|f| f.2.unsigned_abs() + 1).max().unwrap();
        let mut low = LowBits::new(&anchor.cursor, max_bits.div_ceil(64) as usize);
        fractions.sort_by_key(|f| f.0);
        let mut fi = 0;
        for t in 0..=last {
            if t > 0 {
                let (p, q) = ratio(t as u64);
                low.step(p, q);
            }
            while fi < fractions.len() && fractions[fi].0 == t {
                let (_, mant, exp) = fractions[fi];
                sum = sum.add(rounding_delta(mant, exp, &low));
                fi += 1;
            }
        }
    }
    sum
}

/// `(Π p, Π q, T)` with `T / Π q = Σ_i c_i Π_{j<=i} p_j / q_j`. The root
/// skips `Π p`.
fn split(ratios: &[(u64, u64)], coeffs: &[Dyadic], want_p: bool) -> (BigInt, BigInt, Dyadic) {
    if ratios.len() == 1 {
        let (p, q) = (BigInt::from(ratios[0].0), BigInt::from(ratios[0].1));
        let t = coeffs[0].mul(&p);
        return (p, q, t);
    }
    let mid = ratios.len() / 2;
    let ((pl, ql, tl), (pr, qr, tr)) = if ratios.len() > 2048 {
        rayon::join(|| split(&ratios[..mid], &coeffs[..mid], true), || split(&ratios[mid..], &coeffs[mid..], want_p))
    } else {
        (split(&ratios[..mid], &coeffs[..mid], true), split(&ratios[mid..], &coeffs[mid..], want_p))
    };
    let t = tl.mul(&qr).add(tr.mul(&pl));
    let p = if want_p { pl * pr } else { BigInt::zero() };
    (p, ql * qr, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bigutil::scale_round_half_even;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct sum with a fresh binomial per stratum.
    fn direct(n: u64, shares: &[(u64, Share)]) -> BigUint {
        shares.iter().fold(BigUint::zero(), |acc, (k, s)| {
            acc + match s {
                Share::Zero => BigUint::zero(),
                Share::All => binomial(n, *k),
                Share::Fraction(p) => scale_round_half_even(&binomial(n, *k), *p),
                Share::Exact(c) => c.clone(),
            }
        })
    }

    #[test]
    fn low_bits_follow_binomials() {
        let n = 300u64;
        let mut low = LowBits::new(&binomial(n, 120), 3);
        for k in 120..200 {
            low.step(n - k, k + 1);
            assert_eq!(low.low(150), mask(&binomial(n, k + 1), 150), "k={}", k + 1);
        }
        let mut down = LowBits::new(&BigUint::one(), 2);
        for t in 1..=40u64 {
            down.step(n - t + 1, t);
        }
        assert_eq!(down.low(128), mask(&binomial(n, 40), 128));
    }

    #[test]
    fn rounding_delta_matches_direct_rounding() {
        let c = binomial(300, 121);
        let low = LowBits::new(&c, 18);
        for p in [0.5, 0.25, 0.75, 1e-300, 0.3, 0.999_999_999_999_999_9, 5e-324] {
            let (mant, exp) = decompose(p);
            let exact = Dyadic { m: BigInt::from(&c * mant), e: exp };
            let rounded = exact.add(rounding_delta(mant, exp, &low)).into_integer();
            assert_eq!(rounded, BigInt::from(scale_round_half_even(&c, p)), "{p}");
        }
        // 6 * 0.25 = 1.5 -> 2, 10 * 0.25 = 2.5 -> 2, 14 * 0.25 = 3.5 -> 4
        for (c, want) in [(6u32, 2i32), (10, 2), (14, 4)] {
            let c = BigUint::from(c);
            let delta = rounding_delta(1, -2, &LowBits::new(&c, 1));
            assert_eq!(Dyadic { m: BigInt::from(c), e: -2 }.add(delta).into_integer(), BigInt::from(want));
        }
    }

    #[test]
    fn whole_range_is_all_nonempty_subsets() {
        for n in [1u64, 2, 3, 10, 63, 64, 65, 200, 1001] {
            let shares: Vec<_> = (1..=n).map(|k| (k, Share::All)).collect();
            assert_eq!(tally(n, &shares), (BigUint::one() << n) - 1u32, "n={n}");
        }
    }

    #[test]
    fn random_share_patterns_match_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for case in 0..300 {
            let n = rng.random_range(1..=400u64);
            let lo = rng.random_range(1..=n);
            let hi = rng.random_range(lo..=n);
            let shares: Vec<_> = (lo..=hi)
                .map(|k| {
                    let s = match rng.random_range(0..10) {
                        0..=2 => Share::Zero,
                        3..=5 => Share::All,
                        6..=8 => Share::Fraction(rng.random_range(1e-9..1.0)),
                        _ => Share::Exact(BigUint::from(rng.random_range(0..1000u32))),
                    };
                    (k, s)
                })
                .collect();
            assert_eq!(tally(n, &shares), direct(n, &shares), "case {case} n={n}");
        }
    }

    #[test]
    fn sparse_strata_and_long_runs() {
        let n = 5000;
        let mut shares: Vec<(u64, Share)> = (1..1200).map(|k| (k, Share::Zero)).collect();
        shares.extend((1200..1300).map(|k| (k, Share::Fraction(1.0 / (k as f64)))));
        shares.extend((1300..=4100).map(|k| (k, Share::All)));
        shares.push((4700, Share::Fraction(0.5)));
        assert_eq!(tally(n, &shares), direct(n, &shares));
    }

    #[test]
    fn fraction_zone_far_from_every_anchor() {
        let n = 4000;
        let mut shares: Vec<(u64, Share)> = (1..900).map(|k| (k, Share::Zero)).collect();
        shares.extend((900..1100).map(|k| (k, Share::Fraction(1.0 / (1.0 + ((k as f64 - 1000.0) / 9.0).exp())))));
        shares.extend((1100..=n).map(|k| (k, Share::All)));
        assert_eq!(tally(n, &shares), direct(n, &shares));
        let one: Vec<_> = vec![(1000, Share::Fraction(0.123)), (3003, Share::All)];
        assert_eq!(tally(n, &one), direct(n, &one));
    }
}
