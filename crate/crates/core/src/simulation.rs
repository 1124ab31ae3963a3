//! Seeded experiments: set generation, approximation error against exact
//! counts as `n` grows, and JSD tables per subset size and method.
//!
//! Every observation carries the seed that reproduces it. The seed drives
//! both the generated set and, for KDE methods, the sampling (it replaces the
//! method's own seed). Rows are sorted canonically, so equal configurations
//! serialize to identical bytes.

use std::io::Write;
use std::path::{Path, PathBuf};

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bigutil::ratio_to_f64;
use crate::error::{Error, Result};
use crate::evaluation::{divergence_from, integer_granularity, reference_pmf, ReferencePmf};
use crate::exact::{DEFAULT_ENUMERATION_CAP, DP_CELL_LIMIT};
use crate::input::{read_input, InputFormat};
use crate::moments::set_statistics;
use crate::pipeline::{approximate_perfect_sum, exact_perfect_sum, stratum_law, ApproxConfig, Engine, Granularity, Method};

/// Distribution a set is drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    /// Integers in `low..=high`, equally likely.
    DiscreteUniform { low: i64, high: i64 },
    ChiSquare { df: f64 },
    /// Reals in `[low, high)`.
    Uniform { low: f64, high: f64 },
    /// Values read from a file; `n` must match its length.
    CustomFile { path: PathBuf },
}

impl Family {
    fn check(&self) -> Result<()> {
        match *self {
            Family::DiscreteUniform { low, high } if low > high => {
                Err(Error::Config(format!("discrete_uniform needs low <= high, got {low} > {high}")))
            }
            Family::ChiSquare { df } if !(df > 0.0 && df.is_finite()) => {
                Err(Error::Config(format!("chi_square needs df > 0, got {df}")))
            }
            Family::Uniform { low, high } if !(low.is_finite() && high.is_finite() && low < high) => {
                Err(Error::Config(format!("uniform needs finite low < high, got [{low}, {high}]")))
            }
            _ => Ok(()),
        }
    }

    /// Whether exact counts at size `n` are within reach of the oracles.
    fn exact_feasible(&self, n: usize) -> bool {
        if n <= DEFAULT_ENUMERATION_CAP {
            return true;
        }
        match *self {
            Family::DiscreteUniform { low, high } => {
                let spread = low.unsigned_abs().max(high.unsigned_abs()) as u128;
                (n as u128 + 1) * (n as u128 * spread + 1) <= DP_CELL_LIMIT
            }
            _ => false,
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let Family::CustomFile { path } = self {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSpec {
    pub family: Family,
    pub n: usize,
    pub seed: u64,
}

/// `n` independent draws, reproducible from the seed.
pub fn generate_set(spec: &SetSpec) -> Result<Vec<f64>> {
    spec.family.check()?;
    if let Family::CustomFile { path } = &spec.family {
        let values = read_input(path, InputFormat::Auto)?.values;
        if values.len() != spec.n {
            return Err(Error::Config(format!("{} holds {} values, expected n = {}", path.display(), values.len(), spec.n)));
        }
        return Ok(values);
    }
    if spec.n == 0 {
        return Err(Error::Config("set size n must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let values = match spec.family {
        Family::DiscreteUniform { low, high } => (0..spec.n).map(|_| rng.random_range(low..=high) as f64).collect(),
        Family::ChiSquare { df } => {
            let law = ChiSquared::new(df).map_err(|e| Error::Config(format!("chi_square: {e}")))?;
            (0..spec.n).map(|_| law.sample(&mut rng)).collect()
        }
        Family::Uniform { low, high } => (0..spec.n).map(|_| low + (high - low) * rng.random::<f64>()).collect(),
        Family::CustomFile { .. } => unreachable!(),
    };
    Ok(values)
}

/// Target as a function of the generated set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetRule {
    /// `fraction · Σ set`.
    FractionOfTotal { fraction: f64 },
    Value { value: f64 },
}

impl Default for TargetRule {
    fn default() -> Self {
        TargetRule::FractionOfTotal { fraction: 0.5 }
    }
}

impl TargetRule {
    pub fn target(&self, set: &[f64]) -> f64 {
        match *self {
            TargetRule::FractionOfTotal { fraction } => fraction * set.iter().sum::<f64>(),
            TargetRule::Value { value } => value,
        }
    }
}

/// Relative error of approximate totals against exact counts over a grid
/// of set sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorExperiment {
    pub family: Family,
    pub n_values: Vec<usize>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub target: TargetRule,
    pub approx: ApproxConfig,
}

/// JSD between exact and approximate `k`-sum distributions of generated sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivergenceExperiment {
    pub family: Family,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub k_values: Vec<usize>,
    pub methods: Vec<Method>,
    /// Auto means the set's integer spacing, or 1 for real-valued sets.
    #[serde(default)]
    pub granularity: Granularity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum Experiment {
    Error(ErrorExperiment),
    Divergence(DivergenceExperiment),
}

impl Experiment {
    /// Makes relative `custom_file` paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        match self {
            Experiment::Error(e) => e.family.resolve_paths(base),
            Experiment::Divergence(d) => d.family.resolve_paths(base),
        }
    }

    pub fn run(&self) -> Result<ExperimentResult> {
        match self {
            Experiment::Error(e) => error_experiment(e),
            Experiment::Divergence(d) => divergence_experiment(d),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    N,
    K,
}

/// One measured value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub axis: Axis,
    pub x: usize,
    pub method: String,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
}

/// Mean and sample standard deviation of the observations sharing
/// `(axis, x, method, metric)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub axis: Axis,
    pub x: usize,
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    /// The configuration that produced the rows, defaults filled in.
    pub config: serde_json::Value,
    pub rows: Vec<Observation>,
    pub summary: Vec<Summary>,
}

pub const ROW_COLUMNS: [&str; 6] = ["axis", "x", "method", "metric", "value", "seed"];
pub const SUMMARY_COLUMNS: [&str; 7] = ["axis", "x", "method", "metric", "mean", "sd", "count"];

impl ExperimentResult {
    fn new(config: serde_json::Value, mut rows: Vec<Observation>) -> Self {
        rows.sort_by(|a, b| {
            (a.axis, a.x, &a.method, &a.metric, a.seed).cmp(&(b.axis, b.x, &b.method, &b.metric, b.seed))
        });
        let summary = summarize(&rows);
        ExperimentResult { config, rows, summary }
    }

    pub fn rows_for<'a>(&'a self, method: &'a str, metric: &'a str) -> impl Iterator<Item = &'a Observation> + 'a {
        self.rows.iter().filter(move |r| r.method == method && r.metric == metric)
    }

    pub fn summary_for(&self, x: usize, method: &str, metric: &str) -> Option<&Summary> {
        self.summary.iter().find(|s| s.x == x && s.method == method && s.metric == metric)
    }

    /// One line per observation, columns [`ROW_COLUMNS`].
    pub fn write_rows_csv<W: Write>(&self, out: W) -> Result<()> {
        write_csv(out, &self.rows)
    }

    /// One line per group, columns [`SUMMARY_COLUMNS`].
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        write_csv(out, &self.summary)
    }

    /// Pretty JSON with `config`, `rows` and `summary`, newline-terminated.
    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, self).map_err(|e| Error::Io(e.to_string()))?;
        out.write_all(b"\n")?;
        Ok(())
    }
}

fn write_csv<W: Write, T: Serialize>(out: W, items: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for item in items {
        w.serialize(item).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn summarize(rows: &[Observation]) -> Vec<Summary> {
    let mut out: Vec<Summary> = Vec::new();
    for group in rows.chunk_by(|a, b| (a.axis, a.x, &a.method, &a.metric) == (b.axis, b.x, &b.method, &b.metric)) {
        let count = group.len();
        let mean = group.iter().map(|r| r.value).sum::<f64>() / count as f64;
        let sd = if count > 1 {
            (group.iter().map(|r| (r.value - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        let first = &group[0];
        out.push(Summary {
            axis: first.axis,
            x: first.x,
            method: first.method.clone(),
            metric: first.metric.clone(),
            mean,
            sd,
            count,
        });
    }
    out
}

fn with_seed(method: &Method, seed: u64) -> Method {
    match *method {
        Method::Kde { samples, .. } => Method::Kde { samples, seed },
        other => other,
    }
}

fn echo<T: Serialize>(config: &T) -> serde_json::Value {
    serde_json::to_value(config).expect("experiment configs serialize")
}

/// `|approx - exact| / max(exact, 1)` per `(n, seed)`, metric `relative_error`.
pub fn error_experiment(exp: &ErrorExperiment) -> Result<ExperimentResult> {
    exp.family.check()?;
    let infeasible: Vec<usize> = exp.n_values.iter().copied().filter(|&n| !exp.family.exact_feasible(n)).collect();
    if !infeasible.is_empty() {
        return Err(Error::Infeasible(format!(
            "exact counts for n = {infeasible:?} exceed the enumeration cap of {DEFAULT_ENUMERATION_CAP} and the dynamic-programming limit"
        )));
    }
    let cells: Vec<(usize, u64)> =
        exp.n_values.iter().flat_map(|&n| exp.seeds.iter().map(move |&s| (n, s))).collect();
    let rows = cells
        .into_par_iter()
        .map(|(n, seed)| -> Result<Observation> {
            let set = generate_set(&SetSpec { family: exp.family.clone(), n, seed })?;
            let target = exp.target.target(&set);
            let config = ApproxConfig { method: with_seed(&exp.approx.method, seed), ..exp.approx };
            let exact = exact_perfect_sum(&set, target, config.relation, config.tolerance, Engine::Auto)?;
            let approx = approximate_perfect_sum(&set, target, &config)?;
            Ok(Observation {
                axis: Axis::N,
                x: n,
                method: config.method.label().to_string(),
                metric: "relative_error".to_string(),
                value: relative_error(&approx.total, &exact.total),
                seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult::new(echo(&Experiment::Error(exp.clone())), rows))
}

pub fn relative_error(approx: &BigUint, exact: &BigUint) -> f64 {
    let diff = if approx >= exact { approx - exact } else { exact - approx };
    let floor = BigUint::from(1u32);
    ratio_to_f64(&diff, exact.max(&floor))
}

/// Lattice spacing used for divergence tables.
pub fn divergence_granularity(set: &[f64], g: Granularity) -> Result<f64> {
    match g {
        Granularity::Auto => Ok(integer_granularity(set).unwrap_or(1.0)),
        Granularity::Value(v) if v > 0.0 && v.is_finite() => Ok(v),
        Granularity::Value(v) => Err(Error::Config(format!("divergence granularity must be positive, got {v}"))),
    }
}

/// JSD per `(k, method)` for one set, metric `jsd`. KDE methods sample with
/// master seed `seed`. A law that puts no mass on the reference support
/// scores `ln 2`, the divergence of disjoint distributions.
pub fn divergence_table(set: &[f64], k_values: &[usize], methods: &[Method], granularity: Granularity, seed: u64) -> Result<Vec<Observation>> {
    let n = set.len();
    let g = divergence_granularity(set, granularity)?;
    let bad: Vec<usize> = k_values.iter().copied().filter(|&k| k == 0 || k > n).collect();
    if !bad.is_empty() {
        return Err(Error::Config(format!("subset sizes {bad:?} are outside 1..={n}")));
    }
    if methods.contains(&Method::Exact) {
        return Err(Error::Config("the exact method has no approximating law to compare".into()));
    }
    let references: Vec<(usize, Result<ReferencePmf>)> =
        k_values.par_iter().map(|&k| (k, reference_pmf(set, k, g))).collect();
    let failed: Vec<usize> = references.iter().filter(|(_, r)| r.is_err()).map(|(k, _)| *k).collect();
    if let Some((_, Err(first))) = references.iter().find(|(_, r)| r.is_err()) {
        return Err(Error::Infeasible(format!("exact reference distribution unavailable for k = {failed:?}: {first}")));
    }
    let stats = set_statistics(set)?;
    let cells: Vec<(&ReferencePmf, usize, Method)> = references
        .iter()
        .flat_map(|(k, r)| {
            let r = r.as_ref().expect("checked above");
            methods.iter().map(move |m| (r, *k, with_seed(m, seed)))
        })
        .collect();
    cells
        .into_par_iter()
        .map(|(reference, k, method)| {
            let law = stratum_law(set, &stats, k, &method).map_err(|e| e.at(k))?;
            let value = match divergence_from(&reference.pmf, law.as_ref(), g) {
                Ok(v) => v,
                Err(Error::SupportMiss { .. }) => std::f64::consts::LN_2,
                Err(e) => return Err(e.at(k)),
            };
            Ok(Observation { axis: Axis::K, x: k, method: method.label().to_string(), metric: "jsd".into(), value, seed })
        })
        .collect()
}

/// [`divergence_table`] over one generated set per seed.
pub fn divergence_experiment(exp: &DivergenceExperiment) -> Result<ExperimentResult> {
    exp.family.check()?;
    let tables = exp
        .seeds
        .par_iter()
        .map(|&seed| {
            let set = generate_set(&SetSpec { family: exp.family.clone(), n: exp.n, seed })?;
            divergence_table(&set, &exp.k_values, &exp.methods, exp.granularity, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult::new(echo(&Experiment::Divergence(exp.clone())), tables.into_iter().flatten().collect()))
}

/// Result of [`divergence_table`] on a fixed set, with its own config echo.
pub fn divergence_result(set: &[f64], k_values: &[usize], methods: &[Method], granularity: Granularity, seed: u64) -> Result<ExperimentResult> {
    let rows = divergence_table(set, k_values, methods, granularity, seed)?;
    let config = serde_json::json!({
        "experiment": "divergence",
        "n": set.len(),
        "k_values": k_values,
        "methods": methods,
        "granularity": granularity,
        "seed": seed,
    });
    Ok(ExperimentResult::new(config, rows))
}
