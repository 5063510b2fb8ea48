//! The `freeconv` command-line tool. `run` parses arguments, executes one
//! subcommand and returns the process exit code.

mod input;
mod output;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use freeconv::experiments::{
    self, InversionOptions, Metric, RateConfig, ResidualOptions, ResidualPoint, RootLabel, SupportOptions, WeightMode,
};
use freeconv::inversion::{self, FreeSumTransform};
use freeconv::output::fmt17;
use freeconv::sphere::{self, WeightVector};
use freeconv::subordination::{FreeSum, SolveOptions, SolverMethod};
use freeconv::UpperHalfPoint;
use serde::Serialize;
use serde_json::json;

use input::Distribution;
pub use output::Format;
use output::Sink;

/// Exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<freeconv::Error> for CliError {
    fn from(e: freeconv::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

/// Free additive convolution, distribution recovery and rate experiments.
#[derive(Debug, Parser)]
#[command(name = "freeconv", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Free convolution of the input measures: density CSV or transform samples.
    Convolve(ConvolveArgs),
    /// Distance between two distributions.
    Distance(DistanceArgs),
    /// Distances of weighted sums to the semicircle law along an n schedule.
    Rates(RatesArgs),
    /// Detected support of a weighted sum against the enclosure bounds.
    Support(SupportArgs),
    /// Functional-equation residuals of the first subordination function.
    Residuals(ResidualsArgs),
    /// Uniform samples from the unit sphere with their power sums.
    Sphere(SphereArgs),
    /// Monte Carlo check of the sphere concentration inequalities.
    Concentration(ConcentrationArgs),
    /// Free CLT distance for non-identically distributed summands.
    Nonid(NonidArgs),
}

#[derive(Debug, Args)]
pub struct MeasureArgs {
    /// Preset measure: bernoulli, binomial:<p>, semicircle:<c>, dirac:<a>. Repeatable.
    #[arg(long = "preset")]
    pub presets: Vec<String>,
    /// JSON measure file. Repeatable.
    #[arg(long = "measure")]
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Hybrid,
    FixedPoint,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Solver tolerance on the relative system residual.
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
    /// Initial damping of fixed-point sweeps, in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    pub damping: f64,
    #[arg(long, value_enum, default_value_t = Method::Hybrid)]
    pub method: Method,
}

impl SolverArgs {
    fn options(&self) -> Result<SolveOptions, CliError> {
        let opts = SolveOptions {
            tol: self.tol,
            max_iters: self.max_iters,
            damping: self.damping,
            method: match self.method {
                Method::Hybrid => SolverMethod::Hybrid,
                Method::FixedPoint => SolverMethod::FixedPoint,
            },
        };
        opts.validate()?;
        Ok(opts)
    }
}

#[derive(Debug, Args)]
pub struct InversionArgs {
    /// Height of the line on which the transform is sampled.
    #[arg(long, default_value_t = 1e-3)]
    pub eta: f64,
    /// Grid points.
    #[arg(long, default_value_t = 4001)]
    pub points: usize,
    /// Margin added to the support bound on both sides.
    #[arg(long, default_value_t = 1.0)]
    pub margin: f64,
}

impl InversionArgs {
    fn options(&self) -> Result<InversionOptions, CliError> {
        let opts = InversionOptions { eta: self.eta, points: self.points, margin: self.margin };
        opts.validate()?;
        Ok(opts)
    }
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output file; standard output when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Omit the generation time so that repeated runs are byte-identical.
    #[arg(long)]
    pub no_timestamp: bool,
}

impl OutputArgs {
    fn sink(&self, command: &'static str, config: serde_json::Value) -> Sink {
        Sink { command, config, out: self.out.clone(), timestamp: !self.no_timestamp }
    }

    fn format(&self, default: Format, allowed: &[Format]) -> Result<Format, CliError> {
        let f = self.format.unwrap_or(default);
        if !allowed.contains(&f) {
            return Err(CliError::Usage(format!("format {f:?} is not available for this command")));
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Weights {
    Uniform,
    Random,
}

#[derive(Debug, Args)]
pub struct WeightArgs {
    /// Number of summands.
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = Weights::Uniform)]
    pub weights: Weights,
    /// Seed of random weights.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl WeightArgs {
    fn theta(&self) -> Result<WeightVector, CliError> {
        if self.n == 0 {
            return Err(CliError::Usage("--n must be positive".into()));
        }
        Ok(match self.weights {
            Weights::Uniform => WeightVector::uniform(self.n),
            Weights::Random => sphere::sample(self.n, self.seed),
        })
    }

    fn config(&self) -> serde_json::Value {
        json!({ "n": self.n, "weights": weight_name(self.weights), "seed": self.seed })
    }
}

fn weight_name(w: Weights) -> &'static str {
    match w {
        Weights::Uniform => "uniform",
        Weights::Random => "random",
    }
}

#[derive(Debug, Args)]
pub struct ConvolveArgs {
    #[command(flatten)]
    pub measures: MeasureArgs,
    /// Write the recovered density and distribution function (the default).
    #[arg(long, conflicts_with = "transform")]
    pub density: bool,
    /// Write samples of the Cauchy transform on the line instead of the density.
    #[arg(long)]
    pub transform: bool,
    /// Left end of the grid; defaults to the support bound minus the margin.
    #[arg(long, allow_hyphen_values = true)]
    pub x_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub x_max: Option<f64>,
    #[command(flatten)]
    pub inversion: InversionArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DistanceMetric {
    Kolmogorov,
    Levy,
    DeltaEps,
    DeltaTilde,
}

#[derive(Debug, Args)]
pub struct DistanceArgs {
    /// First distribution: preset, `arcsine`, or a JSON file.
    #[arg(long)]
    pub a: String,
    /// Second distribution.
    #[arg(long)]
    pub b: String,
    #[arg(long, value_enum, default_value_t = DistanceMetric::Kolmogorov)]
    pub metric: DistanceMetric,
    /// `eps` of the restricted Kolmogorov distance.
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,
    /// Lower height of the transform-side distance.
    #[arg(long, default_value_t = 0.01)]
    pub tilde_a: f64,
    #[arg(long, default_value_t = 0.2)]
    pub tilde_eps: f64,
    #[command(flatten)]
    pub inversion: InversionArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct RatesArgs {
    #[command(flatten)]
    pub measures: MeasureArgs,
    /// Standardize the input measure first.
    #[arg(long)]
    pub standardize: bool,
    /// Comma-separated increasing n schedule.
    #[arg(long = "n", value_delimiter = ',', required = true)]
    pub n_schedule: Vec<usize>,
    #[arg(long, value_enum, default_value_t = Weights::Uniform)]
    pub weights: Weights,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Repetitions per n; random weights use seed + rep.
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    /// Comma-separated metrics: delta, delta_eps, delta_tilde, levy.
    #[arg(long = "metric", value_delimiter = ',', default_value = "delta")]
    pub metrics: Vec<String>,
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.01)]
    pub tilde_a: f64,
    #[arg(long, default_value_t = 0.2)]
    pub tilde_eps: f64,
    #[command(flatten)]
    pub inversion: InversionArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SupportArgs {
    #[command(flatten)]
    pub measures: MeasureArgs,
    #[arg(long)]
    pub standardize: bool,
    #[command(flatten)]
    pub weights: WeightArgs,
    /// Density threshold, before the Cauchy-tail allowance.
    #[arg(long, default_value_t = 1e-5)]
    pub threshold: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub eta: f64,
    #[arg(long, default_value_t = 24_001)]
    pub points: usize,
    #[arg(long, default_value_t = 0.5)]
    pub margin: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ResidualsArgs {
    #[command(flatten)]
    pub measures: MeasureArgs,
    #[arg(long)]
    pub standardize: bool,
    #[command(flatten)]
    pub weights: WeightArgs,
    /// The grid covers `|Re z| <= re_max`.
    #[arg(long, default_value_t = 1.7)]
    pub re_max: f64,
    #[arg(long, default_value_t = 0.05)]
    pub im_min: f64,
    #[arg(long, default_value_t = 3.0)]
    pub im_max: f64,
    /// Grid columns (real parts).
    #[arg(long, default_value_t = 20)]
    pub grid_re: usize,
    /// Grid rows (imaginary parts, geometrically spaced).
    #[arg(long, default_value_t = 10)]
    pub grid_im: usize,
    /// Extra points on the line `Im z = 1`.
    #[arg(long, default_value_t = 41)]
    pub line_points: usize,
    #[arg(long, default_value_t = 0.3)]
    pub eps_hat: f64,
    #[arg(long, default_value_t = 0.05)]
    pub a_hat: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SphereArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of independent samples.
    #[arg(long, default_value_t = 1)]
    pub count: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ConcentrationArgs {
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct NonidArgs {
    #[command(flatten)]
    pub measures: MeasureArgs,
    /// Repeat the list of input measures this many times.
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,
    #[command(flatten)]
    pub inversion: InversionArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Diagnostics go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("freeconv: {e}");
        return e.code();
    }
    match execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("freeconv: {e}");
            e.code()
        }
    }
}

/// Applies `FREECONV_THREADS` to the global pool.
fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("FREECONV_THREADS") else { return Ok(()) };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Usage(format!("FREECONV_THREADS must be a positive integer, got `{raw}`")))?;
    // the pool can only be built once per process; later calls keep the first setting
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

pub fn execute(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Convolve(a) => convolve(a),
        Command::Distance(a) => distance(a),
        Command::Rates(a) => rates(a),
        Command::Support(a) => support(a),
        Command::Residuals(a) => residuals(a),
        Command::Sphere(a) => sphere_cmd(a),
        Command::Concentration(a) => concentration(a),
        Command::Nonid(a) => nonid(a),
    }
}

fn solver_config(o: &SolveOptions) -> serde_json::Value {
    serde_json::to_value(o).expect("options serialize")
}

fn convolve(a: &ConvolveArgs) -> Result<(), CliError> {
    let measures = input::collect_measures(&a.measures.presets, &a.measures.files)?;
    if measures.is_empty() {
        return Err(CliError::Usage("no input measure given (use --preset or --measure)".into()));
    }
    let solver = a.solver.options()?;
    let inv = a.inversion.options()?;
    let format = a.output.format(Format::Csv, &[Format::Csv, Format::Json])?;
    output::check_output_dir(&a.output.out)?;
    let sum = FreeSum::new(&measures)?;
    let (lo, hi) = inversion::window(sum.support_bound(), inv.margin);
    let (lo, hi) = (a.x_min.unwrap_or(lo), a.x_max.unwrap_or(hi));
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(CliError::Usage(format!("empty window [{lo}, {hi}]")));
    }
    let kind = if a.transform { "transform" } else { "density" };
    let config = json!({
        "measures": measures,
        "output": kind,
        "x_min": lo,
        "x_max": hi,
        "inversion": inv,
        "solver": solver_config(&solver),
        "format": format,
    });
    let sink = a.output.sink("convolve", config);
    let xs = inversion::uniform_grid(lo, hi, inv.points);
    if a.transform {
        let gs = sum.cauchy_line(&xs, inv.eta, &solver)?;
        match format {
            Format::Csv => {
                let mut body = String::from("x,eta,re_g,im_g\n");
                for (x, g) in xs.iter().zip(&gs) {
                    let _ = writeln!(body, "{},{},{},{}", fmt17(*x), fmt17(inv.eta), fmt17(g.re), fmt17(g.im));
                }
                sink.csv(&body)
            }
            Format::Json => sink.json(&json!({ "x": xs, "eta": inv.eta, "g": gs })),
        }
    } else {
        let transform = FreeSumTransform::new(sum, solver);
        let dist = inversion::recover(&transform, lo, hi, inv.points, inv.eta)?;
        match format {
            Format::Csv => sink.csv(&dist.to_csv_string()),
            Format::Json => sink.json(&dist),
        }
    }
}

#[derive(Serialize)]
struct DistanceResult {
    metric: &'static str,
    value: f64,
    error: f64,
    /// True when both sides were recovered on a common grid.
    smoothed: bool,
}

fn metric_name(m: DistanceMetric) -> &'static str {
    match m {
        DistanceMetric::Kolmogorov => "kolmogorov",
        DistanceMetric::Levy => "levy",
        DistanceMetric::DeltaEps => "delta_eps",
        DistanceMetric::DeltaTilde => "delta_tilde",
    }
}

fn distance(a: &DistanceArgs) -> Result<(), CliError> {
    let solver = a.solver.options()?;
    let inv = a.inversion.options()?;
    if !(a.eps > 0.0 && a.eps < 1.0) || !(a.tilde_eps > 0.0 && a.tilde_eps < 1.0) || !(a.tilde_a > 0.0 && a.tilde_a < 1.0) {
        return Err(CliError::Usage("eps, tilde-eps and tilde-a must lie in (0, 1)".into()));
    }
    let format = a.output.format(Format::Json, &[Format::Json, Format::Csv])?;
    output::check_output_dir(&a.output.out)?;
    let da = Distribution::parse(&a.a)?;
    let db = Distribution::parse(&a.b)?;
    let config = json!({
        "a": a.a,
        "b": a.b,
        "metric": metric_name(a.metric),
        "eps": a.eps,
        "tilde_a": a.tilde_a,
        "tilde_eps": a.tilde_eps,
        "inversion": inv,
        "solver": solver_config(&solver),
        "format": format,
    });
    let sink = a.output.sink("distance", config);

    let smoothed = a.metric != DistanceMetric::DeltaTilde && (da.needs_inversion() || db.needs_inversion());
    let estimate = if a.metric == DistanceMetric::DeltaTilde {
        let (ta, tb) = (da.transform(solver), db.transform(solver));
        inversion::delta_tilde(ta.as_ref(), tb.as_ref(), a.tilde_a, a.tilde_eps)?
    } else if smoothed {
        // both sides smoothed at the same height keep the comparison unbiased
        let (lo, hi) = inversion::window(da.support_bound().max(db.support_bound()), inv.margin);
        let ga = inversion::recover(da.transform(solver).as_ref(), lo, hi, inv.points, inv.eta)?;
        let gb = inversion::recover(db.transform(solver).as_ref(), lo, hi, inv.points, inv.eta)?;
        cdf_metric(a, &ga, &gb)?
    } else {
        cdf_metric(a, da.law().expect("analytic"), db.law().expect("analytic"))?
    };
    let result = DistanceResult { metric: metric_name(a.metric), value: estimate.value, error: estimate.error, smoothed };
    match format {
        Format::Json => sink.json(&result),
        Format::Csv => sink.csv(&format!(
            "metric,value,error,smoothed\n{},{},{},{}\n",
            result.metric,
            fmt17(result.value),
            fmt17(result.error),
            result.smoothed
        )),
    }
}

fn cdf_metric(
    a: &DistanceArgs,
    x: &dyn inversion::Cdf,
    y: &dyn inversion::Cdf,
) -> Result<inversion::DistanceEstimate, CliError> {
    Ok(match a.metric {
        DistanceMetric::Kolmogorov => inversion::kolmogorov(x, y),
        DistanceMetric::Levy => inversion::levy(x, y),
        DistanceMetric::DeltaEps => inversion::delta_eps(x, y, a.eps)?,
        DistanceMetric::DeltaTilde => unreachable!("handled on the transform side"),
    })
}

fn standardized(m: freeconv::Measure, standardize: bool) -> Result<freeconv::Measure, CliError> {
    let m = if standardize { m.standardize()? } else { m };
    input::require_standardized(&m)?;
    Ok(m)
}

fn rates(a: &RatesArgs) -> Result<(), CliError> {
    let mu = standardized(input::single_measure(&a.measures.presets, &a.measures.files)?, a.standardize)?;
    let metrics = a
        .metrics
        .iter()
        .map(|m| m.trim().parse::<Metric>())
        .collect::<freeconv::Result<Vec<_>>>()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let cfg = RateConfig {
        n_schedule: a.n_schedule.clone(),
        weight_mode: match a.weights {
            Weights::Uniform => WeightMode::Uniform,
            Weights::Random => WeightMode::Random { seed: a.seed },
        },
        metrics,
        reps: a.reps,
        inversion: a.inversion.options()?,
        solver: a.solver.options()?,
        eps: a.eps,
        tilde_a: a.tilde_a,
        tilde_eps: a.tilde_eps,
    };
    cfg.validate()?;
    let format = a.output.format(Format::Csv, &[Format::Csv, Format::Json])?;
    output::check_output_dir(&a.output.out)?;
    let config = json!({ "measure": mu, "seed": a.seed, "rates": cfg, "format": format });
    let sink = a.output.sink("rates", config);
    let report = experiments::rate_experiment(&mu, &cfg)?;
    for row in report.rows.iter().filter(|r| r.failure.is_some()) {
        eprintln!("freeconv: row n={} rep={} failed: {}", row.n, row.rep, row.failure.as_deref().unwrap_or(""));
    }
    match format {
        Format::Csv => {
            let mut body = String::new();
            for f in &report.fits {
                let name = serde_json::to_value(f.metric).expect("metric serializes");
                match &f.fit {
                    Some(fit) => {
                        let _ = writeln!(
                            body,
                            "# fit metric={} slope={} intercept={} r_squared={} used={} skipped={}",
                            name.as_str().unwrap_or(""),
                            fmt17(fit.slope),
                            fmt17(fit.intercept),
                            fmt17(fit.r_squared),
                            fit.used,
                            fit.skipped
                        );
                    }
                    None => {
                        let _ = writeln!(body, "# fit metric={} unavailable", name.as_str().unwrap_or(""));
                    }
                }
            }
            body.push_str(&report.to_csv_string());
            sink.csv(&body)
        }
        Format::Json => sink.json(&report),
    }
}

fn support(a: &SupportArgs) -> Result<(), CliError> {
    let mu = standardized(input::single_measure(&a.measures.presets, &a.measures.files)?, a.standardize)?;
    let theta = a.weights.theta()?;
    let solver = a.solver.options()?;
    let opts = SupportOptions { threshold: a.threshold, eta: a.eta, points: a.points, margin: a.margin };
    if !(opts.threshold > 0.0) || !(opts.eta > 0.0 && opts.eta < 1.0) || opts.points < 3 || !(opts.margin >= 0.0) {
        return Err(CliError::Usage("need threshold > 0, eta in (0, 1), points >= 3 and margin >= 0".into()));
    }
    a.output.format(Format::Json, &[Format::Json])?;
    output::check_output_dir(&a.output.out)?;
    let config = json!({
        "measure": mu,
        "weights": a.weights.config(),
        "support": opts,
        "solver": solver_config(&solver),
    });
    let sink = a.output.sink("support", config);
    let report = experiments::support_experiment(&mu, &theta, &solver, &opts)?;
    sink.json(&report)
}

/// Grid of the residual sweep followed by the `Im z = 1` line.
fn residual_grid(a: &ResidualsArgs) -> Result<(Vec<UpperHalfPoint>, usize), CliError> {
    if !(a.re_max >= 0.0) || !(a.im_min > 0.0 && a.im_min <= a.im_max) || a.grid_re == 0 || a.grid_im == 0 {
        return Err(CliError::Usage("need re_max >= 0, 0 < im_min <= im_max and a nonempty grid".into()));
    }
    let res = if a.grid_re == 1 { vec![0.0] } else { inversion::uniform_grid(-a.re_max, a.re_max, a.grid_re) };
    let ims: Vec<f64> = if a.grid_im == 1 {
        vec![a.im_min]
    } else {
        let ratio = (a.im_max / a.im_min).ln() / (a.grid_im - 1) as f64;
        (0..a.grid_im).map(|k| a.im_min * (ratio * k as f64).exp()).collect()
    };
    let mut grid = Vec::with_capacity(res.len() * ims.len() + a.line_points);
    for &y in &ims {
        for &x in &res {
            grid.push(UpperHalfPoint::new(x, y)?);
        }
    }
    let line = match a.line_points {
        0 => Vec::new(),
        1 => vec![0.0],
        k => inversion::uniform_grid(-a.re_max, a.re_max, k),
    };
    for x in line {
        grid.push(UpperHalfPoint::new(x, 1.0)?);
    }
    Ok((grid, a.line_points))
}

#[derive(Serialize)]
struct LineSummary {
    points: usize,
    matches_omega_tilde2: usize,
    max_distance_omega_tilde2: f64,
}

fn label(l: RootLabel) -> String {
    serde_json::to_value(l).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

fn line_summary(points: &[ResidualPoint]) -> LineSummary {
    let terms: Vec<_> = points.iter().filter_map(|p| p.terms.as_ref()).collect();
    LineSummary {
        points: points.len(),
        matches_omega_tilde2: terms.iter().filter(|t| t.matched_root_q == RootLabel::OmegaTilde2).count(),
        max_distance_omega_tilde2: terms.iter().fold(0.0f64, |m, t| m.max((t.omega_tilde[1] - t.subordinators[0]).norm())),
    }
}

fn residuals(a: &ResidualsArgs) -> Result<(), CliError> {
    let mu = standardized(input::single_measure(&a.measures.presets, &a.measures.files)?, a.standardize)?;
    let theta = a.weights.theta()?;
    let solver = a.solver.options()?;
    let opts = ResidualOptions { eps_hat: a.eps_hat, a_hat: a.a_hat };
    let (grid, line_points) = residual_grid(a)?;
    let format = a.output.format(Format::Json, &[Format::Json, Format::Csv])?;
    output::check_output_dir(&a.output.out)?;
    let config = json!({
        "measure": mu,
        "weights": a.weights.config(),
        "grid": { "re_max": a.re_max, "im_min": a.im_min, "im_max": a.im_max, "grid_re": a.grid_re, "grid_im": a.grid_im, "line_points": a.line_points },
        "regions": opts,
        "solver": solver_config(&solver),
        "format": format,
    });
    let sink = a.output.sink("residuals", config);
    let points = experiments::functional_residuals(&mu, &theta, &grid, &solver, &opts)?;
    let split = points.len() - line_points;
    match format {
        Format::Json => sink.json(&json!({
            "summary": experiments::summarize_residuals(&points[..split]),
            "line": line_summary(&points[split..]),
            "points": points,
        })),
        Format::Csv => {
            let mut body = String::from(
                "re_z,im_z,on_line,residual_p,residual_q,vieta_sum,vieta_product,root_formula_gap,matched_root,matched_distance,matched_root_q,matched_distance_q,in_region,failure\n",
            );
            for (i, p) in points.iter().enumerate() {
                let z = p.z.z();
                let _ = write!(body, "{},{},{},", fmt17(z.re), fmt17(z.im), i >= split);
                match &p.terms {
                    Some(t) => {
                        let _ = writeln!(
                            body,
                            "{},{},{},{},{},{},{},{},{},{},",
                            fmt17(t.residual_p),
                            fmt17(t.residual_q),
                            fmt17(t.vieta_sum),
                            fmt17(t.vieta_product),
                            fmt17(t.root_formula_gap),
                            label(t.matched_root),
                            fmt17(t.matched_distance),
                            label(t.matched_root_q),
                            fmt17(t.matched_distance_q),
                            t.in_region
                        );
                    }
                    None => {
                        let reason = p.failure.as_deref().unwrap_or("").replace([',', '\n'], ";");
                        let _ = writeln!(body, ",,,,,,,,,,{reason}");
                    }
                }
            }
            sink.csv(&body)
        }
    }
}

fn sphere_cmd(a: &SphereArgs) -> Result<(), CliError> {
    if a.n == 0 || a.count == 0 {
        return Err(CliError::Usage("--n and --count must be positive".into()));
    }
    a.output.format(Format::Json, &[Format::Json])?;
    output::check_output_dir(&a.output.out)?;
    let sink = a.output.sink("sphere", json!({ "n": a.n, "seed": a.seed, "count": a.count }));
    let samples: Vec<_> = (0..a.count)
        .map(|i| {
            let theta = sphere::sample_indexed(a.n, a.seed, i);
            let stats = sphere::stats(&theta);
            json!({ "index": i, "theta": theta.as_slice(), "stats": stats })
        })
        .collect();
    sink.json(&samples)
}

fn concentration(a: &ConcentrationArgs) -> Result<(), CliError> {
    if a.n < 2 || a.samples == 0 {
        return Err(CliError::Usage("need --n >= 2 and a positive sample count".into()));
    }
    a.output.format(Format::Json, &[Format::Json])?;
    output::check_output_dir(&a.output.out)?;
    let sink = a.output.sink("concentration", json!({ "n": a.n, "samples": a.samples, "seed": a.seed }));
    let report = sphere::concentration_report(a.n, a.samples, a.seed)?;
    sink.json(&report)
}

fn nonid(a: &NonidArgs) -> Result<(), CliError> {
    let base = input::collect_measures(&a.measures.presets, &a.measures.files)?;
    if base.is_empty() || a.repeat == 0 {
        return Err(CliError::Usage("need at least one input measure and --repeat >= 1".into()));
    }
    let measures: Vec<_> = std::iter::repeat_n(base.iter(), a.repeat).flatten().cloned().collect();
    let solver = a.solver.options()?;
    let inv = a.inversion.options()?;
    a.output.format(Format::Json, &[Format::Json])?;
    output::check_output_dir(&a.output.out)?;
    let config = json!({
        "measures": base,
        "repeat": a.repeat,
        "inversion": inv,
        "solver": solver_config(&solver),
    });
    let sink = a.output.sink("nonid", config);
    let report = experiments::nonid_experiment(&measures, &solver, &inv)?;
    sink.json(&report)
}
