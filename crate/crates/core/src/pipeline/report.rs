use std::io::Write;

use num_bigint::BigUint;
use num_traits::Zero;
use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

use super::Share;
use crate::approx::BerryEsseenTerms;
use crate::bigutil::{log10, scale_round_half_even};
use crate::exact::binomial;
use crate::Relation;

/// Largest `n` for which `CountDetail::Auto` writes every per-stratum count.
pub const COUNT_MATERIALIZE_LIMIT: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct StratumRow {
    pub k: usize,
    pub probability: f64,
    /// `normal`, `irwin_hall`, `chi_square`, `kde`, `degenerate`, `lattice`,
    /// `exact`, `exact_dp` or `exact_enumeration`.
    pub method_used: &'static str,
    pub share: Share,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticRow {
    pub k: usize,
    pub berry_esseen: Option<BerryEsseenTerms>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxReport {
    pub n: usize,
    pub target: f64,
    pub relation: Relation,
    pub granularity: f64,
    pub method: String,
    /// One row per stratum, ascending `k`.
    pub rows: Vec<StratumRow>,
    pub total: BigUint,
    pub diagnostics: Option<Vec<DiagnosticRow>>,
}

/// Whether serialized rows carry their counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CountDetail {
    /// Counts when `n <= COUNT_MATERIALIZE_LIMIT`.
    #[default]
    Auto,
    Full,
    Omit,
}

impl ApproxReport {
    /// Count of stratum `k`, if the report covers it.
    pub fn count(&self, k: usize) -> Option<BigUint> {
        let row = self.rows.iter().find(|r| r.k == k)?;
        Some(share_count(&row.share, || binomial(self.n as u64, k as u64)))
    }

    /// Per-row counts in row order. Costs one big-integer binomial update
    /// per row, so it is meant for moderate `n`.
    pub fn counts(&self) -> Vec<BigUint> {
        let n = self.n as u64;
        let mut out = Vec::with_capacity(self.rows.len());
        let mut cursor: Option<(u64, BigUint)> = None;
        for row in &self.rows {
            let k = row.k as u64;
            let c = match cursor.take() {
                Some((j, c)) if j + 1 == k => c * (n - j) / k,
                _ => binomial(n, k),
            };
            out.push(share_count(&row.share, || c.clone()));
            cursor = Some((k, c));
        }
        out
    }

    /// Drops strata outside `lo..=hi` and recomputes the total.
    pub fn restrict(&mut self, lo: usize, hi: usize) {
        self.rows.retain(|r| (lo..=hi).contains(&r.k));
        self.total = self.counts().into_iter().fold(BigUint::zero(), |a, c| a + c);
    }

    fn view(&self, detail: CountDetail) -> ReportView<'_> {
        let with_counts = match detail {
            CountDetail::Auto => self.n <= COUNT_MATERIALIZE_LIMIT,
            CountDetail::Full => true,
            CountDetail::Omit => false,
        };
        ReportView {
            n: self.n,
            target: self.target,
            relation: self.relation,
            method: &self.method,
            granularity: self.granularity,
            total: self.total.to_string(),
            total_log10: log10(&self.total),
            per_k: Rows { rows: &self.rows, counts: with_counts.then(|| self.counts()) },
            diagnostics: self.diagnostics.as_deref(),
        }
    }

    pub fn to_json(&self, detail: CountDetail) -> serde_json::Value {
        serde_json::to_value(self.view(detail)).expect("report serializes")
    }

    /// Compact JSON followed by a newline.
    pub fn write_json<W: Write>(&self, mut out: W, detail: CountDetail) -> std::io::Result<()> {
        serde_json::to_writer(&mut out, &self.view(detail))?;
        out.write_all(b"\n")
    }
}

fn share_count(share: &Share, subsets: impl FnOnce() -> BigUint) -> BigUint {
    match share {
        Share::Zero => BigUint::zero(),
        Share::All => subsets(),
        Share::Fraction(p) => scale_round_half_even(&subsets(), *p),
        Share::Exact(c) => c.clone(),
    }
}

#[derive(Serialize)]
struct ReportView<'a> {
    n: usize,
    target: f64,
    relation: Relation,
    method: &'a str,
    granularity: f64,
    total: String,
    total_log10: f64,
    per_k: Rows<'a>,
    #[serde(skip_serializing_if = "Option::is_none")]
    diagnostics: Option<&'a [DiagnosticRow]>,
}

struct Rows<'a> {
    rows: &'a [StratumRow],
    counts: Option<Vec<BigUint>>,
}

#[derive(Serialize)]
struct RowView<'a> {
    k: usize,
    probability: f64,
    count: Option<String>,
    method_used: &'a str,
}

impl Serialize for Rows<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.rows.len()))?;
        for (i, row) in self.rows.iter().enumerate() {
            seq.serialize_element(&RowView {
                k: row.k,
                probability: row.probability,
                count: self.counts.as_ref().map(|c| c[i].to_string()),
                method_used: row.method_used,
            })?;
        }
        seq.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{approximate_perfect_sum, exact_perfect_sum, ApproxConfig, Engine, Method};

    #[test]
    fn json_shape() {
        let r = exact_perfect_sum(&[1.0, 2.0, 3.0, 4.0], 5.0, Relation::Ge, 0.0, Engine::Auto).unwrap();
        let v = r.to_json(CountDetail::Auto);
        assert_eq!(v["total"], "9");
        assert_eq!(v["relation"], "ge");
        assert_eq!(v["n"], 4);
        assert_eq!(v["per_k"][1]["count"], "4");
        assert_eq!(v["per_k"][1]["k"], 2);
        assert_eq!(v["per_k"][1]["method_used"], "exact_dp");
        assert!(v.get("diagnostics").is_none());
        let omitted = r.to_json(CountDetail::Omit);
        assert!(omitted["per_k"][1]["count"].is_null());

        let mut buf = Vec::new();
        r.write_json(&mut buf, CountDetail::Full).unwrap();
        assert_eq!(buf.last(), Some(&b'\n'));
        let parsed: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(parsed["per_k"], r.to_json(CountDetail::Full)["per_k"]);
        // fields keep declaration order on the wire
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("{\"n\":4,\"target\":5.0,\"relation\":\"ge\""), "{text}");
    }

    #[test]
    fn restricted_range() {
        let cfg = ApproxConfig { k_min: Some(2), k_max: Some(3), ..ApproxConfig::new(Method::Exact, Relation::Ge) };
        let r = approximate_perfect_sum(&[1.0, 2.0, 3.0, 4.0], 5.0, &cfg).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert_eq!(r.total, BigUint::from(8u32));
        assert_eq!(r.count(2), Some(BigUint::from(4u32)));
        assert_eq!(r.count(1), None);
    }
}
