//! Approximating laws for the sum of a random `k`-subset, and the
//! probability queries the counting pipeline asks of them.

mod berry_esseen;
pub mod irwin_hall;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{checked_gamma_lr, checked_gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::moments::{subset_sum_mean, subset_sum_variance, SetStatistics};
use crate::Relation;

pub use berry_esseen::{berry_esseen_terms, BerryEsseenMoments, BerryEsseenTerms};
use irwin_hall::IRWIN_HALL_EXACT_MAX_K;

/// Anything that can answer CDF-style questions about a real random variable.
pub trait SumLaw {
    /// `P(X <= x)`.
    fn cdf(&self, x: f64) -> f64;

    /// `P(X > x)`.
    fn sf(&self, x: f64) -> f64 {
        1.0 - self.cdf(x)
    }

    /// `P(a < X <= b)`; zero when `b <= a`.
    fn mass(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        (self.cdf(b) - self.cdf(a)).max(0.0)
    }

    fn density(&self, x: f64) -> f64;

    fn mean(&self) -> f64;

    fn variance(&self) -> f64;

    /// Location of the single atom for point-mass laws.
    fn atom(&self) -> Option<f64> {
        None
    }
}

/// Parametric law of a subset sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SumDistribution {
    Normal { mean: f64, variance: f64 },
    /// Sum of `k` i.i.d. uniforms on `[low, high]`.
    IrwinHall { k: usize, low: f64, high: f64 },
    /// Sum of `k` i.i.d. chi-square(`df`) variables.
    ChiSquareSum { k: usize, df: f64 },
    Degenerate { value: f64 },
}

/// Normal law with the subset-sum moments, or a point mass when the variance
/// vanishes (`k = n` or a constant set).
pub fn normal_sum_approx(stats: &SetStatistics, k: usize) -> Result<SumDistribution> {
    let mean = subset_sum_mean(stats, k)?;
    let variance = subset_sum_variance(stats, k)?;
    if variance == 0.0 {
        return Ok(SumDistribution::Degenerate { value: mean });
    }
    Ok(SumDistribution::Normal { mean, variance })
}

pub fn irwin_hall_sum(k: usize, low: f64, high: f64) -> Result<SumDistribution> {
    if k == 0 {
        return Err(Error::domain("Irwin-Hall needs k >= 1"));
    }
    if !(low.is_finite() && high.is_finite() && low < high) {
        return Err(Error::domain(format!("Irwin-Hall needs finite low < high, got [{low}, {high}]")));
    }
    Ok(SumDistribution::IrwinHall { k, low, high })
}

pub fn chi_square_sum(k: usize, df: f64) -> Result<SumDistribution> {
    if k == 0 {
        return Err(Error::domain("chi-square sum needs k >= 1"));
    }
    if !(df > 0.0 && df.is_finite()) {
        return Err(Error::domain(format!("chi-square degrees of freedom must be positive, got {df}")));
    }
    Ok(SumDistribution::ChiSquareSum { k, df })
}

impl SumDistribution {
    pub fn kind(&self) -> &'static str {
        match self {
            SumDistribution::Normal { .. } => "normal",
            SumDistribution::IrwinHall { .. } => "irwin_hall",
            SumDistribution::ChiSquareSum { .. } => "chi_square_sum",
            SumDistribution::Degenerate { .. } => "degenerate",
        }
    }

    /// Irwin–Hall beyond the exact range is evaluated as its matching normal.
    fn normal_stand_in(&self) -> Option<(f64, f64)> {
        match *self {
            SumDistribution::Normal { mean, variance } => Some((mean, variance.sqrt())),
            SumDistribution::IrwinHall { k, .. } if k > IRWIN_HALL_EXACT_MAX_K => {
                Some((self.mean(), self.variance().sqrt()))
            }
            _ => None,
        }
    }

    /// Maps `x` to the standard Irwin–Hall scale.
    fn unit(x: f64, k: usize, low: f64, high: f64) -> f64 {
        (x - k as f64 * low) / (high - low)
    }
}

fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    0.5 * libm::erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2))
}

fn normal_sf(x: f64, mean: f64, sd: f64) -> f64 {
    0.5 * libm::erfc((x - mean) / (sd * std::f64::consts::SQRT_2))
}

fn chi_square_cdf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    checked_gamma_lr(dof / 2.0, x / 2.0).unwrap_or(1.0)
}

fn chi_square_sf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    checked_gamma_ur(dof / 2.0, x / 2.0).unwrap_or(0.0)
}

impl SumLaw for SumDistribution {
    fn cdf(&self, x: f64) -> f64 {
        if let Some((m, sd)) = self.normal_stand_in() {
            return normal_cdf(x, m, sd);
        }
        match *self {
            SumDistribution::IrwinHall { k, low, high } => irwin_hall::standard_cdf(Self::unit(x, k, low, high), k),
            SumDistribution::ChiSquareSum { k, df } => chi_square_cdf(x, k as f64 * df),
            SumDistribution::Degenerate { value } => (x >= value) as u8 as f64,
            SumDistribution::Normal { .. } => unreachable!(),
        }
    }

    fn sf(&self, x: f64) -> f64 {
        if let Some((m, sd)) = self.normal_stand_in() {
            return normal_sf(x, m, sd);
        }
        match *self {
            SumDistribution::IrwinHall { k, low, high } => irwin_hall::standard_sf(Self::unit(x, k, low, high), k),
            SumDistribution::ChiSquareSum { k, df } => chi_square_sf(x, k as f64 * df),
            SumDistribution::Degenerate { value } => (x < value) as u8 as f64,
            SumDistribution::Normal { .. } => unreachable!(),
        }
    }

    /// Differences are taken on whichever side of the mean keeps the two
    /// tail values small, so narrow windows far out keep their precision.
    fn mass(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        if let SumDistribution::Degenerate { value } = *self {
            return (a < value && value <= b) as u8 as f64;
        }
        let m = if a >= self.mean() {
            self.sf(a) - self.sf(b)
        } else {
            self.cdf(b) - self.cdf(a)
        };
        m.clamp(0.0, 1.0)
    }

    fn density(&self, x: f64) -> f64 {
        if let Some((m, sd)) = self.normal_stand_in() {
            let z = (x - m) / sd;
            return (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
        }
        match *self {
            SumDistribution::IrwinHall { k, low, high } => {
                irwin_hall::standard_pdf(Self::unit(x, k, low, high), k) / (high - low)
            }
            SumDistribution::ChiSquareSum { k, df } => {
                let half = k as f64 * df / 2.0;
                if x < 0.0 {
                    0.0
                } else if x == 0.0 {
                    match half.partial_cmp(&1.0) {
                        Some(std::cmp::Ordering::Less) => f64::INFINITY,
                        Some(std::cmp::Ordering::Equal) => 0.5,
                        _ => 0.0,
                    }
                } else {
                    ((half - 1.0) * (x / 2.0).ln() - x / 2.0 - ln_gamma(half)).exp() / 2.0
                }
            }
            SumDistribution::Degenerate { value } => {
                if x == value {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            SumDistribution::Normal { .. } => unreachable!(),
        }
    }

    fn mean(&self) -> f64 {
        match *self {
            SumDistribution::Normal { mean, .. } => mean,
            SumDistribution::IrwinHall { k, low, high } => k as f64 * (low + high) / 2.0,
            SumDistribution::ChiSquareSum { k, df } => k as f64 * df,
            SumDistribution::Degenerate { value } => value,
        }
    }

    fn variance(&self) -> f64 {
        match *self {
            SumDistribution::Normal { variance, .. } => variance,
            SumDistribution::IrwinHall { k, low, high } => k as f64 * (high - low) * (high - low) / 12.0,
            SumDistribution::ChiSquareSum { k, df } => 2.0 * k as f64 * df,
            SumDistribution::Degenerate { .. } => 0.0,
        }
    }

    fn atom(&self) -> Option<f64> {
        match *self {
            SumDistribution::Degenerate { value } => Some(value),
            _ => None,
        }
    }
}

/// Relative slack used when comparing a point mass against the target.
const ATOM_TOLERANCE: f64 = 1e-9;

/// `P(sum <relation> target)` under `law`, with sums treated as lying on a
/// lattice of spacing `granularity`.
///
/// With `g > 0` each lattice point owns the window `(t - g/2, t + g/2]`:
/// `eq` is the window mass, `ge` everything above `t - g/2` and `le`
/// everything up to `t + g/2`. With `g = 0`, `ge`/`le` are the plain tails and
/// `eq` is rejected for continuous laws. Point masses compare their atom with
/// the target directly.
pub fn probability_query<L: SumLaw + ?Sized>(law: &L, target: f64, relation: Relation, granularity: f64) -> Result<f64> {
    if target.is_nan() {
        return Err(Error::domain("target is NaN"));
    }
    if !(granularity >= 0.0 && granularity.is_finite()) {
        return Err(Error::domain(format!("granularity must be finite and non-negative, got {granularity}")));
    }
    if let Some(atom) = law.atom() {
        let slack = ATOM_TOLERANCE * target.abs().max(1.0);
        let hit = match relation {
            Relation::Eq => (atom - target).abs() <= slack,
            Relation::Ge => atom >= target - slack,
            Relation::Le => atom <= target + slack,
        };
        return Ok(hit as u8 as f64);
    }
    let half = granularity / 2.0;
    let p = match relation {
        Relation::Eq if granularity == 0.0 => return Err(Error::ZeroGranularity),
        Relation::Eq => law.mass(target - half, target + half),
        Relation::Ge => law.sf(target - half),
        Relation::Le => law.cdf(target + half),
    };
    Ok(p.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::set_statistics;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{ChiSquared, Distribution};

    /// Normal CDF by Simpson integration of the density from far in the left tail.
    fn simpson_normal_cdf(x: f64, mean: f64, var: f64) -> f64 {
        let sd = var.sqrt();
        let a = mean - 12.0 * sd;
        let steps = 200_000;
        let h = (x - a) / steps as f64;
        let f = |t: f64| (-(t - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
        let mut s = f(a) + f(x);
        for i in 1..steps {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn normal_from_small_set() {
        let stats = set_statistics(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let d = normal_sum_approx(&stats, 2).unwrap();
        assert_eq!(d, SumDistribution::Normal { mean: 5.0, variance: subset_sum_variance(&stats, 2).unwrap() });
        assert!((d.variance() - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(normal_sum_approx(&stats, 4).unwrap(), SumDistribution::Degenerate { value: 10.0 });

        let want = simpson_normal_cdf(5.5, 5.0, 5.0 / 3.0) - simpson_normal_cdf(4.5, 5.0, 5.0 / 3.0);
        let got = d.mass(4.5, 5.5);
        assert!((got - want).abs() < 1e-9);
        assert!((got - 0.3015).abs() < 5e-5);
        let q = probability_query(&d, 5.0, Relation::Eq, 1.0).unwrap();
        assert_eq!(q, got);
    }

    #[test]
    fn constant_set_is_degenerate() {
        let stats = set_statistics(&[3.0; 6]).unwrap();
        assert_eq!(normal_sum_approx(&stats, 2).unwrap(), SumDistribution::Degenerate { value: 6.0 });
        assert!(normal_sum_approx(&stats, 7).is_err());
    }

    #[test]
    fn irwin_hall_low_orders() {
        let u1 = irwin_hall_sum(1, 0.0, 1.0).unwrap();
        assert_eq!(u1.cdf(0.5), 0.5);
        let tri = irwin_hall_sum(2, 0.0, 1.0).unwrap();
        assert_eq!(tri.cdf(1.0), 0.5);
        let ih3 = irwin_hall_sum(3, 0.0, 1.0).unwrap();
        assert_eq!(ih3.cdf(1.5), 0.5);
        assert_eq!(ih3.density(1.5), 0.75);
        assert!(irwin_hall_sum(3, 1.0, 1.0).is_err());
        assert!(irwin_hall_sum(3, 2.0, 1.0).is_err());

        let scaled = irwin_hall_sum(4, 0.0, 20.0).unwrap();
        assert_eq!((scaled.mean(), scaled.variance()), (40.0, 4.0 * 400.0 / 12.0));
    }

    #[test]
    fn irwin_hall_against_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 10_000_000;
        let (mut below, mut window) = (0u64, 0u64);
        for _ in 0..draws {
            let s: f64 = rng.random::<f64>() + rng.random::<f64>() + rng.random::<f64>();
            below += (s <= 1.5) as u64;
            window += (s > 1.45 && s <= 1.55) as u64;
        }
        let d = irwin_hall_sum(3, 0.0, 1.0).unwrap();
        assert!((below as f64 / draws as f64 - d.cdf(1.5)).abs() < 1e-3);
        let mc_window = window as f64 / draws as f64;
        assert!((mc_window - d.mass(1.45, 1.55)).abs() < 1e-3);
        // window mass over width is the density up to O(h^2) curvature
        assert!((mc_window / 0.1 - d.density(1.5)).abs() < 3e-3);
    }

    #[test]
    fn irwin_hall_switches_to_normal_above_forty() {
        let d = irwin_hall_sum(41, 0.0, 1.0).unwrap();
        assert_eq!(d.cdf(20.5), 0.5);
        let sd = (41.0f64 / 12.0).sqrt();
        let v = d.cdf(20.5 + sd);
        assert!((v - 0.841_344_746_068_543).abs() < 1e-12, "{v}");
        let exact40 = irwin_hall_sum(40, 0.0, 1.0).unwrap();
        assert!((exact40.cdf(20.0) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn chi_square_sums() {
        let d = chi_square_sum(1, 2.0).unwrap();
        assert!((d.cdf(2.0 * std::f64::consts::LN_2) - 0.5).abs() < 1e-14);
        for x in [0.1, 1.0, 3.0, 10.0] {
            assert!((d.cdf(x) - (1.0 - (-x / 2.0).exp())).abs() < 1e-14);
            assert!((d.density(x) - (-x / 2.0).exp() / 2.0).abs() < 1e-14);
        }
        let d5 = chi_square_sum(5, 2.0).unwrap();
        assert_eq!((d5.mean(), d5.variance()), (10.0, 20.0));
        assert!(chi_square_sum(3, 0.0).is_err());
        assert!(chi_square_sum(3, -1.0).is_err());

        let d34 = chi_square_sum(3, 4.0).unwrap();
        let chi = ChiSquared::new(4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let draws = 10_000_000;
        let hits = (0..draws)
            .filter(|_| chi.sample(&mut rng) + chi.sample(&mut rng) + chi.sample(&mut rng) <= 12.0)
            .count();
        assert!((hits as f64 / draws as f64 - d34.cdf(12.0)).abs() < 1e-3);
    }

    #[test]
    fn query_rules() {
        let deg = SumDistribution::Degenerate { value: 10.0 };
        for g in [0.0, 0.5, 1.0] {
            assert_eq!(probability_query(&deg, 10.0, Relation::Eq, g).unwrap(), 1.0);
            assert_eq!(probability_query(&deg, 10.5, Relation::Eq, g).unwrap(), 0.0);
            assert_eq!(probability_query(&deg, 11.0, Relation::Ge, g).unwrap(), 0.0);
            assert_eq!(probability_query(&deg, 11.0, Relation::Le, g).unwrap(), 1.0);
        }
        let n = SumDistribution::Normal { mean: 5.0, variance: 5.0 / 3.0 };
        assert_eq!(probability_query(&n, 5.0, Relation::Eq, 0.0), Err(Error::ZeroGranularity));
        assert_eq!(probability_query(&n, 5.0, Relation::Ge, 0.0).unwrap(), 0.5);
        assert!(probability_query(&n, 5.0, Relation::Ge, -1.0).is_err());
        for d in [
            n,
            irwin_hall_sum(3, 0.0, 20.0).unwrap(),
            chi_square_sum(2, 3.0).unwrap(),
        ] {
            let p = probability_query(&d, -1e12, Relation::Ge, 1.0).unwrap();
            assert!((p - 1.0).abs() < 1e-12, "{d:?}");
        }
    }

    #[test]
    fn continuous_mass_definition() {
        let d = chi_square_sum(2, 3.0).unwrap();
        for (a, b) in [(0.5, 1.0), (2.0, 9.0), (20.0, 20.5)] {
            assert!((d.mass(a, b) - (d.cdf(b) - d.cdf(a))).abs() < 1e-14);
        }
        assert_eq!(d.mass(3.0, 2.0), 0.0);
    }

    fn any_law() -> impl Strategy<Value = SumDistribution> {
        prop_oneof![
            (-50.0..50.0f64, 0.01..100.0f64).prop_map(|(mean, variance)| SumDistribution::Normal { mean, variance }),
            (1usize..=45, -5.0..5.0f64, 0.1..10.0f64)
                .prop_map(|(k, low, w)| SumDistribution::IrwinHall { k, low, high: low + w }),
            (1usize..=10, 0.2..20.0f64).prop_map(|(k, df)| SumDistribution::ChiSquareSum { k, df }),
            (-50.0..50.0f64).prop_map(|value| SumDistribution::Degenerate { value }),
        ]
    }

    proptest! {
        #[test]
        fn complement_identity(d in any_law(), t in -100.0..200.0f64, g in 0.01..3.0f64) {
            let ge = probability_query(&d, t, Relation::Ge, g).unwrap();
            let le = probability_query(&d, t, Relation::Le, g).unwrap();
            let eq = probability_query(&d, t, Relation::Eq, g).unwrap();
            prop_assert!((ge + le - eq - 1.0).abs() < 1e-9, "ge {ge} le {le} eq {eq}");
        }

        #[test]
        fn cdf_monotone(d in any_law(), start in -100.0..100.0f64, step in 0.001..2.0f64) {
            let mut prev = 0.0;
            for i in 0..200 {
                let c = d.cdf(start + i as f64 * step);
                prop_assert!((0.0..=1.0).contains(&c));
                prop_assert!(c >= prev);
                prev = c;
            }
        }

        #[test]
        fn irwin_hall_midpoint(k in 1usize..=40, low in -10.0..10.0f64, w in 0.1..10.0f64) {
            let d = irwin_hall_sum(k, low, low + w).unwrap();
            prop_assert!((d.cdf(d.mean()) - 0.5).abs() < 1e-9);
        }
    }
}
