//! Discrete Jensen–Shannon divergence between an exact subset-sum pmf and a
//! continuous approximation integrated over lattice bins.

use serde::{Deserialize, Serialize};

use crate::approx::SumLaw;
use crate::error::{Error, Result};
use crate::exact::{exact_sum_pmf, integer_values, ExactSumPmf};

/// Masses must sum to one within this.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Below this captured mass a discretization is rejected.
pub const MIN_CAPTURED_MASS: f64 = 1e-6;

/// Quantization steps per bin used when the exact pmf is out of reach.
pub const REFERENCE_SUBSTEPS: f64 = 256.0;

/// Support points closer than this (relative) are merged when aligning.
const ALIGN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePmf {
    support: Vec<f64>,
    mass: Vec<f64>,
}

impl DiscretePmf {
    /// Validates strictly increasing finite support and non-negative masses
    /// summing to one.
    pub fn new(support: Vec<f64>, mass: Vec<f64>) -> Result<Self> {
        if support.len() != mass.len() {
            return Err(Error::domain("support and mass lengths differ"));
        }
        if support.is_empty() {
            return Err(Error::domain("empty pmf"));
        }
        if support.iter().any(|s| !s.is_finite()) || support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("support must be finite and strictly increasing"));
        }
        if mass.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::domain("masses must be finite and non-negative"));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::domain(format!("masses sum to {total}, not 1")));
        }
        Ok(DiscretePmf { support, mass })
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn from_exact(pmf: &ExactSumPmf) -> Self {
        DiscretePmf { support: pmf.support.clone(), mass: pmf.mass.clone() }
    }

    /// Moves every point to the center of its bin `(c - g/2, c + g/2]`,
    /// centers being `origin + j·g`.
    pub fn binned(&self, g: f64, origin: f64) -> Result<Self> {
        check_granularity(g)?;
        let mut support: Vec<f64> = Vec::new();
        let mut mass: Vec<f64> = Vec::new();
        let mut last: Option<i64> = None;
        for (&s, &m) in self.support.iter().zip(&self.mass) {
            let j = bin_index(s, g, origin);
            if last == Some(j) {
                *mass.last_mut().unwrap() += m;
            } else {
                support.push(origin + j as f64 * g);
                mass.push(m);
                last = Some(j);
            }
        }
        Ok(DiscretePmf { support, mass })
    }
}

fn check_granularity(g: f64) -> Result<()> {
    if !(g > 0.0 && g.is_finite()) {
        return Err(Error::domain(format!("granularity must be positive, got {g}")));
    }
    Ok(())
}

/// Bin holding `s` among `(origin + (j - 1/2)g, origin + (j + 1/2)g]`.
fn bin_index(s: f64, g: f64, origin: f64) -> i64 {
    ((s - origin) / g - 0.5).ceil() as i64
}

/// Result of integrating a law over bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretized {
    pub pmf: DiscretePmf,
    /// Mass the bins held before renormalization.
    pub captured: f64,
}

/// Integrates `law` over `(s - g/2, s + g/2]` for each support point and
/// renormalizes.
pub fn discretize<L: SumLaw + ?Sized>(law: &L, support: &[f64], g: f64) -> Result<Discretized> {
    check_granularity(g)?;
    if support.is_empty() {
        return Err(Error::domain("empty support"));
    }
    // spacing below g would count the same mass twice
    if support.windows(2).any(|w| w[1] - w[0] < g * (1.0 - 1e-9)) {
        return Err(Error::domain(format!("support points must be spaced at least {g} apart")));
    }
    let raw: Vec<f64> = support.iter().map(|&s| law.mass(s - g / 2.0, s + g / 2.0)).collect();
    let captured: f64 = raw.iter().sum();
    if !(captured >= MIN_CAPTURED_MASS) {
        return Err(Error::SupportMiss { captured });
    }
    let mass = raw.iter().map(|m| m / captured).collect();
    Ok(Discretized { pmf: DiscretePmf { support: support.to_vec(), mass }, captured })
}

/// Discrete Jensen–Shannon divergence (natural log) over the union of the
/// two supports, missing points counting as zero mass.
pub fn js_divergence(p: &DiscretePmf, q: &DiscretePmf) -> f64 {
    let same = |a: f64, b: f64| (a - b).abs() <= ALIGN_TOLERANCE * a.abs().max(b.abs()).max(1.0);
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    while i < p.support.len() || j < q.support.len() {
        let (pm, qm) = match (p.support.get(i), q.support.get(j)) {
            (Some(&a), Some(&b)) if same(a, b) => {
                i += 1;
                j += 1;
                (p.mass[i - 1], q.mass[j - 1])
            }
            (Some(&a), Some(&b)) if a < b => {
                i += 1;
                (p.mass[i - 1], 0.0)
            }
            (Some(_), None) => {
                i += 1;
                (p.mass[i - 1], 0.0)
            }
            _ => {
                j += 1;
                (0.0, q.mass[j - 1])
            }
        };
        let m = 0.5 * (pm + qm);
        if pm > 0.0 {
            total += 0.5 * pm * (pm / m).ln();
        }
        if qm > 0.0 {
            total += 0.5 * qm * (qm / m).ln();
        }
    }
    total.clamp(0.0, std::f64::consts::LN_2)
}

/// Reference distribution of `k`-subset sums, binned at granularity `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePmf {
    pub pmf: DiscretePmf,
    /// False when elements were quantized to `g / REFERENCE_SUBSTEPS` first.
    pub exact: bool,
}

/// Exact pmf of `k`-subset sums binned onto the lattice of spacing `g`.
///
/// When the exact pmf is too expensive (a real-valued set with too many
/// subsets), elements are rounded to multiples of `g / 256` and counted by
/// dynamic programming; each sum then moves by at most `k·g/512`.
pub fn reference_pmf(set: &[f64], k: usize, g: f64) -> Result<ReferencePmf> {
    check_granularity(g)?;
    let (pmf, exact) = match exact_sum_pmf(set, k) {
        Ok(p) => (DiscretePmf::from_exact(&p), true),
        Err(Error::SubsetBudget { .. }) => {
            let step = g / REFERENCE_SUBSTEPS;
            let quantized: Vec<f64> = set.iter().map(|x| (x / step).round()).collect();
            let p = exact_sum_pmf(&quantized, k)?;
            let support = p.support.iter().map(|s| s * step).collect();
            (DiscretePmf { support, mass: p.mass }, false)
        }
        Err(e) => return Err(e),
    };
    let origin = lattice_origin(&pmf, g);
    Ok(ReferencePmf { pmf: pmf.binned(g, origin)?, exact })
}

/// Anchor of the bin lattice: the smallest sum when every sum already sits
/// on a lattice of spacing `g`, else zero.
fn lattice_origin(pmf: &DiscretePmf, g: f64) -> f64 {
    let lo = pmf.support[0];
    let on_lattice = pmf.support.iter().all(|s| {
        let r = (s - lo) / g;
        (r - r.round()).abs() <= 1e-9
    });
    if on_lattice {
        lo
    } else {
        0.0
    }
}

/// Contiguous lattice spanning the reference support.
pub fn lattice_between(lo: f64, hi: f64, g: f64) -> Vec<f64> {
    let steps = ((hi - lo) / g).round() as usize;
    (0..=steps).map(|j| lo + j as f64 * g).collect()
}

/// JSD between a reference pmf and `law` discretized on the contiguous
/// lattice covering the reference.
pub fn divergence_from<L: SumLaw + ?Sized>(reference: &DiscretePmf, law: &L, g: f64) -> Result<f64> {
    let s = reference.support();
    let grid = lattice_between(s[0], s[s.len() - 1], g);
    let approx = discretize(law, &grid, g)?;
    Ok(js_divergence(reference, &approx.pmf))
}

/// Spacing of an integer-valued set: gcd of differences from the smallest
/// element, or 1 for constant sets. `None` for non-integer sets.
pub fn integer_granularity(set: &[f64]) -> Option<f64> {
    let ints = integer_values(set)?;
    let lo = *ints.iter().min()?;
    let g = ints.iter().fold(0u64, |acc, &x| gcd(acc, (x - lo).unsigned_abs()));
    Some(if g == 0 { 1.0 } else { g as f64 })
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}
