//! Berry–Esseen style error terms for the normal approximation of a sample
//! sum drawn without replacement from a finite set.
//!
//! Each element is read as a degenerate random variable equal to its
//! observed value. Elements are standardized with the unbiased scale
//! `s² = Σ(x - mean)² / (n - 1)`, which keeps `b = 1 - p·mean(z²)` strictly
//! positive for every `k <= n`, so `k = n` reports `δ₁` instead of failing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::check_values;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerryEsseenTerms {
    pub p: f64,
    pub q: f64,
    pub b: f64,
    pub delta1: f64,
    pub delta2: f64,
    /// `min(δ₁, δ₂ + 1/√(kq))` with `1/0 = ∞`; the bound is `C` times this.
    pub bound_over_c: f64,
}

/// Standardized moments of a set, computed once and reused for every `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerryEsseenMoments {
    n: usize,
    /// `mean(z²) = (n - 1) / n` up to rounding.
    second: f64,
    /// `mean(|z|³)`.
    third: f64,
}

impl BerryEsseenMoments {
    pub fn new(set: &[f64]) -> Result<Self> {
        check_values(set)?;
        let n = set.len();
        if n < 2 {
            return Err(Error::BoundUndefined("a single element has no spread".into()));
        }
        let mean = set.iter().sum::<f64>() / n as f64;
        let ss: f64 = set.iter().map(|x| (x - mean) * (x - mean)).sum();
        let scale = (ss / (n - 1) as f64).sqrt();
        if !(scale > 0.0) {
            return Err(Error::BoundUndefined("constant set".into()));
        }
        let (mut second, mut third) = (0.0, 0.0);
        for x in set {
            let z = (x - mean) / scale;
            second += z * z;
            third += (z * z * z).abs();
        }
        Ok(BerryEsseenMoments { n, second: second / n as f64, third: third / n as f64 })
    }

    pub fn terms(&self, k: usize) -> Result<BerryEsseenTerms> {
        let n = self.n;
        if k == 0 || k > n {
            return Err(Error::domain(format!("subset size k = {k} outside 1..={n}")));
        }
        let p = k as f64 / n as f64;
        let q = (n - k) as f64 / n as f64;
        let b = 1.0 - p * self.second;
        if !(b > 0.0) {
            return Err(Error::BoundUndefined(format!("b = {b} is not positive at k = {k}")));
        }
        let m3 = self.third;
        let (kf, nf) = (k as f64, n as f64);
        let delta1 = m3 / (kf.sqrt() * b.powf(1.5));
        let delta2 = m3 / (nf * b).sqrt() + q.powi(3) * m3 / (nf.sqrt() * b.powf(1.5));
        let tail = if q == 0.0 { f64::INFINITY } else { 1.0 / (kf * q).sqrt() };
        let bound_over_c = delta1.min(delta2 + tail);
        Ok(BerryEsseenTerms { p, q, b, delta1, delta2, bound_over_c })
    }
}

pub fn berry_esseen_terms(set: &[f64], k: usize) -> Result<BerryEsseenTerms> {
    BerryEsseenMoments::new(set)?.terms(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform_set(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(0.0..1.0)).collect()
    }

    /// Straight transcription evaluated from scratch for one k.
    fn direct(set: &[f64], k: usize) -> f64 {
        let n = set.len() as f64;
        let mean = set.iter().sum::<f64>() / n;
        let s = (set.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let z: Vec<f64> = set.iter().map(|x| (x - mean) / s).collect();
        let p = k as f64 / n;
        let q = 1.0 - p;
        let b = 1.0 - p * z.iter().map(|v| v * v).sum::<f64>() / n;
        let m3 = z.iter().map(|v| v.abs().powi(3)).sum::<f64>() / n;
        let d1 = m3 / ((k as f64).sqrt() * b.powf(1.5));
        let d2 = m3 / (n * b).sqrt() + q.powi(3) * m3 / (n.sqrt() * b.powf(1.5));
        d1.min(d2 + 1.0 / (k as f64 * q).sqrt())
    }

    #[test]
    fn whole_set_uses_first_branch() {
        let set = uniform_set(50, 1);
        let t = berry_esseen_terms(&set, 50).unwrap();
        assert_eq!(t.q, 0.0);
        assert_eq!(t.bound_over_c, t.delta1);
        assert!(t.b > 0.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(berry_esseen_terms(&[2.0; 10], 3), Err(Error::BoundUndefined(_))));
        assert!(matches!(berry_esseen_terms(&[2.0], 1), Err(Error::BoundUndefined(_))));
        assert!(berry_esseen_terms(&[1.0, 2.0], 3).is_err());
    }

    #[test]
    fn pinned_uniform_thousand() {
        let set = uniform_set(1000, 2024);
        let t = berry_esseen_terms(&set, 100).unwrap();
        assert!(t.bound_over_c.is_finite() && t.bound_over_c > 0.0);
        assert!((t.bound_over_c - direct(&set, 100)).abs() < 1e-12);
        assert!((t.bound_over_c - PINNED).abs() < 1e-9, "{}", t.bound_over_c);
    }
    const PINNED: f64 = 0.152_892_493_360_250_57;

    #[test]
    fn shrinks_with_k_up_to_a_quarter() {
        // δ₁'s 1/√k decay wins until b^{-3/2} takes over near k = n/4
        for seed in 0..20 {
            let set = uniform_set(400, 100 + seed);
            let m = BerryEsseenMoments::new(&set).unwrap();
            let mut prev = f64::INFINITY;
            for k in 1..=100 {
                let v = m.terms(k).unwrap().bound_over_c;
                assert!(v <= prev + 1e-12, "seed {seed} k {k}");
                prev = v;
            }
        }
    }

    #[test]
    fn cached_moments_match_direct() {
        let set = uniform_set(37, 9);
        let m = BerryEsseenMoments::new(&set).unwrap();
        for k in 1..37 {
            assert!((m.terms(k).unwrap().bound_over_c - direct(&set, k)).abs() < 1e-12);
        }
    }
}
