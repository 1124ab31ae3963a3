use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use perfectsum::input::{parse_input, read_input, InputDocument, InputFormat};
use perfectsum::pipeline::{approximate_perfect_sum, exact_perfect_sum, ApproxConfig, CountDetail, Engine, Granularity, Method};
use perfectsum::simulation::{divergence_result, Experiment, ExperimentResult};
use perfectsum::{Error, Relation};

/// Environment variable holding the default worker cap.
const THREADS_ENV: &str = "PERFECTSUM_THREADS";

#[derive(Parser)]
#[command(name = "perfectsum", version, about = "Count subsets whose sums hit, exceed or stay under a target")]
struct Cli {
    /// Worker threads (default: $PERFECTSUM_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output on stderr; repeat for debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact counts by enumeration or dynamic programming.
    Exact(ExactArgs),
    /// Approximate counts from a per-size distribution of subset sums.
    Approx(ApproxArgs),
    /// JSD between exact and approximate subset-sum distributions.
    Evaluate(EvaluateArgs),
    /// Run an experiment described by a JSON or TOML config.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Input file, or `-` for stdin.
    input: PathBuf,
    /// How to read the input.
    #[arg(long, value_enum, default_value_t = FormatArg::Auto)]
    input_format: FormatArg,
}

#[derive(Args)]
struct QueryArgs {
    /// Value the subset sums are compared against.
    #[arg(long, allow_hyphen_values = true)]
    target: f64,
    /// Count sums equal to (eq), at least (ge) or at most (le) the target.
    #[arg(long, value_enum)]
    relation: RelationArg,
}

#[derive(Args)]
struct ExactArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    query: QueryArgs,
    /// Sums within this distance of the target count as equal.
    #[arg(long, default_value_t = 0.0)]
    tolerance: f64,
    /// `auto` uses the dynamic program for integer sets and enumerates otherwise.
    #[arg(long, value_enum, default_value_t = EngineArg::Auto)]
    engine: EngineArg,
    /// Per-size counts in the report (`auto` writes them up to n = 4096).
    #[arg(long, value_enum, default_value_t = CountsArg::Auto)]
    counts: CountsArg,
}

#[derive(Args)]
struct MethodArgs {
    /// Lower bound of the uniform family (irwin-hall).
    #[arg(long, allow_hyphen_values = true)]
    low: Option<f64>,
    /// Upper bound of the uniform family (irwin-hall).
    #[arg(long, allow_hyphen_values = true)]
    high: Option<f64>,
    /// Degrees of freedom (chi-square).
    #[arg(long)]
    df: Option<f64>,
    /// Sampled subset sums per size (kde).
    #[arg(long, default_value_t = perfectsum::kde::DEFAULT_KDE_SAMPLES)]
    samples: usize,
    /// Master seed for sampling (kde).
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl MethodArgs {
    fn method(&self, name: MethodArg) -> Result<Method, Error> {
        let need = |v: Option<f64>, flag: &str| {
            v.ok_or_else(|| Error::Config(format!("method {} needs --{flag}", name.name())))
        };
        Ok(match name {
            MethodArg::Normal => Method::Normal,
            MethodArg::IrwinHall => Method::IrwinHall { low: need(self.low, "low")?, high: need(self.high, "high")? },
            MethodArg::ChiSquare => Method::ChiSquare { df: need(self.df, "df")? },
            MethodArg::Kde => Method::Kde { samples: self.samples, seed: self.seed },
            MethodArg::Exact => Method::Exact,
        })
    }
}

#[derive(Args)]
struct ApproxArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    query: QueryArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::Normal)]
    method: MethodArg,
    #[command(flatten)]
    params: MethodArgs,
    /// Lattice spacing of the sums: `auto` or a non-negative number.
    #[arg(long, default_value = "auto")]
    granularity: String,
    /// Count sizes up to this exactly when C(n, k) <= 10^6.
    #[arg(long, default_value_t = 0)]
    exact_small_k: usize,
    /// Smallest subset size to include (default 1).
    #[arg(long)]
    k_min: Option<usize>,
    /// Largest subset size to include (default n).
    #[arg(long)]
    k_max: Option<usize>,
    /// Equality slack for exactly counted sizes.
    #[arg(long, default_value_t = 0.0)]
    tolerance: f64,
    /// Attach Berry–Esseen terms for each size.
    #[arg(long)]
    diagnostics: bool,
    /// Per-size counts in the report (`auto` writes them up to n = 4096).
    #[arg(long, value_enum, default_value_t = CountsArg::Auto)]
    counts: CountsArg,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Subset sizes, e.g. `1,2,4` or `1-4`.
    #[arg(long, value_parser = parse_sizes)]
    k: SizeList,
    /// Comma-separated methods.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "normal")]
    methods: Vec<MethodArg>,
    #[command(flatten)]
    params: MethodArgs,
    /// Bin width: `auto` (integer spacing, else 1) or a positive number.
    #[arg(long, default_value = "auto")]
    granularity: String,
    /// Rows as CSV, or the full document with config and summary as JSON.
    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    format: TableFormat,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment config (`.json` or `.toml`).
    #[arg(long)]
    config: PathBuf,
    /// Directory for results.json, results.csv and summary.csv; without it
    /// the JSON result goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Auto,
    Text,
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum RelationArg {
    Eq,
    Ge,
    Le,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Enumerate,
    Dp,
    Auto,
}

#[derive(Clone, Copy, ValueEnum)]
enum CountsArg {
    Auto,
    Full,
    Omit,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum MethodArg {
    Normal,
    #[value(alias = "irwin-hall")]
    IrwinHall,
    #[value(alias = "chi-square")]
    ChiSquare,
    Kde,
    Exact,
}

impl MethodArg {
    fn name(self) -> &'static str {
        match self {
            MethodArg::Normal => "normal",
            MethodArg::IrwinHall => "irwin_hall",
            MethodArg::ChiSquare => "chi_square",
            MethodArg::Kde => "kde",
            MethodArg::Exact => "exact",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TableFormat {
    Csv,
    Json,
}

#[derive(Clone)]
struct SizeList(Vec<usize>);

fn parse_sizes(s: &str) -> Result<SizeList, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let parse = |x: &str| x.trim().parse::<usize>().map_err(|_| format!("bad subset size {x:?}"));
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (parse(a)?, parse(b)?);
                if a > b {
                    return Err(format!("empty range {part}"));
                }
                out.extend(a..=b);
            }
            None => out.push(parse(part)?),
        }
    }
    if out.is_empty() {
        return Err("no subset sizes given".into());
    }
    Ok(SizeList(out))
}

fn parse_granularity(s: &str) -> Result<Granularity, Error> {
    if s == "auto" {
        return Ok(Granularity::Auto);
    }
    s.parse::<f64>()
        .map(Granularity::Value)
        .map_err(|_| Error::Config(format!("granularity must be `auto` or a number, got {s:?}")))
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::TooLarge { .. } | Error::SubsetBudget { .. } | Error::TableTooLarge { .. } | Error::Infeasible(_) => 2,
            Error::EmptySet
            | Error::NonFinite { .. }
            | Error::Parse { .. }
            | Error::Config(_)
            | Error::Domain(_)
            | Error::ZeroGranularity
            | Error::CovarianceUndefined { .. }
            | Error::BoundUndefined(_) => 1,
            _ => 3,
        };
        Failure { code, message: e.to_string() }
    }
}

fn input_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure { code: 1, message: format!("{}: {e}", path.display()) }
}

fn output_failure(e: impl std::fmt::Display) -> Failure {
    Failure { code: 3, message: format!("writing output: {e}") }
}

fn read_values(args: &InputArgs) -> Result<InputDocument, Failure> {
    let format = match args.input_format {
        FormatArg::Auto => InputFormat::Auto,
        FormatArg::Text => InputFormat::Text,
        FormatArg::Csv => InputFormat::Csv,
        FormatArg::Json => InputFormat::Json,
    };
    let started = Instant::now();
    let doc = if args.input.as_os_str() == "-" {
        let mut text = String::new();
        io::stdin().read_to_string(&mut text).map_err(|e| input_failure(&args.input, e))?;
        parse_input(&text, format)
    } else {
        read_input(&args.input, format)
    }
    .map_err(|e| match e {
        Error::Io(_) | Error::Parse { .. } | Error::EmptySet | Error::NonFinite { .. } => input_failure(&args.input, e),
        other => other.into(),
    })?;
    info!("read {} values from {} in {:.3?}", doc.values.len(), args.input.display(), started.elapsed());
    Ok(doc)
}

fn relation(r: RelationArg) -> Relation {
    match r {
        RelationArg::Eq => Relation::Eq,
        RelationArg::Ge => Relation::Ge,
        RelationArg::Le => Relation::Le,
    }
}

fn count_detail(c: CountsArg) -> CountDetail {
    match c {
        CountsArg::Auto => CountDetail::Auto,
        CountsArg::Full => CountDetail::Full,
        CountsArg::Omit => CountDetail::Omit,
    }
}

fn stdout() -> BufWriter<io::StdoutLock<'static>> {
    BufWriter::with_capacity(1 << 20, io::stdout().lock())
}

fn cmd_exact(args: ExactArgs) -> Result<(), Failure> {
    let doc = read_values(&args.input)?;
    let engine = match args.engine {
        EngineArg::Enumerate => Engine::Enumerate,
        EngineArg::Dp => Engine::Dp,
        EngineArg::Auto => Engine::Auto,
    };
    let started = Instant::now();
    let report = exact_perfect_sum(&doc.values, args.query.target, relation(args.query.relation), args.tolerance, engine)?;
    info!("exact counts for n = {} in {:.3?}", doc.values.len(), started.elapsed());
    let mut out = stdout();
    report.write_json(&mut out, count_detail(args.counts)).map_err(output_failure)?;
    out.flush().map_err(output_failure)
}

fn cmd_approx(args: ApproxArgs) -> Result<(), Failure> {
    let doc = read_values(&args.input)?;
    let config = ApproxConfig {
        method: args.params.method(args.method)?,
        relation: relation(args.query.relation),
        granularity: parse_granularity(&args.granularity)?,
        k_min: args.k_min,
        k_max: args.k_max,
        exact_small_k: args.exact_small_k,
        tolerance: args.tolerance,
        diagnostics: args.diagnostics,
    };
    let started = Instant::now();
    let report = approximate_perfect_sum(&doc.values, args.query.target, &config)?;
    info!("{} approximation for n = {} in {:.3?}", report.method, report.n, started.elapsed());
    let mut out = stdout();
    report.write_json(&mut out, count_detail(args.counts)).map_err(output_failure)?;
    out.flush().map_err(output_failure)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), Failure> {
    let doc = read_values(&args.input)?;
    let methods = args.methods.iter().map(|&m| args.params.method(m)).collect::<Result<Vec<_>, _>>()?;
    let started = Instant::now();
    let result = divergence_result(&doc.values, &args.k.0, &methods, parse_granularity(&args.granularity)?, args.params.seed)?;
    info!("{} divergences in {:.3?}", result.rows.len(), started.elapsed());
    let mut out = stdout();
    match args.format {
        TableFormat::Csv => result.write_rows_csv(&mut out)?,
        TableFormat::Json => result.write_json(&mut out)?,
    }
    out.flush().map_err(output_failure)
}

fn load_experiment(path: &Path) -> Result<Experiment, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| input_failure(path, e))?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    let mut exp: Experiment = if is_toml {
        toml::from_str(&text).map_err(|e| input_failure(path, e))?
    } else {
        serde_json::from_str(&text).map_err(|e| input_failure(path, e))?
    };
    exp.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(exp)
}

fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(output_failure)?;
    let create = |name: &str| -> Result<BufWriter<std::fs::File>, Failure> {
        let path = dir.join(name);
        info!("writing {}", path.display());
        std::fs::File::create(&path).map(BufWriter::new).map_err(output_failure)
    };
    result.write_json(create("results.json")?)?;
    result.write_rows_csv(create("results.csv")?)?;
    result.write_summary_csv(create("summary.csv")?)?;
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Failure> {
    let exp = load_experiment(&args.config)?;
    let started = Instant::now();
    let result = exp.run()?;
    info!("{} observations in {:.3?}", result.rows.len(), started.elapsed());
    match &args.out {
        Some(dir) => write_outputs(&result, dir),
        None => {
            let mut out = stdout();
            result.write_json(&mut out)?;
            out.flush().map_err(output_failure)
        }
    }
}

fn thread_cap(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure { code: 1, message: format!("{THREADS_ENV} must be a positive integer, got {v:?}") }),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(threads) = thread_cap(cli.threads)? {
        if threads == 0 {
            return Err(Failure { code: 1, message: "thread count must be at least 1".into() });
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure { code: 3, message: e.to_string() })?;
    }
    match cli.command {
        Command::Exact(a) => cmd_exact(a),
        Command::Approx(a) => cmd_approx(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
