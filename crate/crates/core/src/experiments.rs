//! End-to-end harnesses: convergence rates of weighted free sums to the
//! semicircle law, support enclosures, and residuals of the algebraic
//! equations satisfied by the first subordination function.

use std::fmt;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complexfn::{cauchy_c, sqrt_cut, UpperHalfPoint};
use crate::error::{Error, Result};
use crate::inversion::{
    delta_eps, delta_tilde, kolmogorov, levy, recover, uniform_grid, DistanceEstimate, FreeSumTransform,
    GriddedDistribution, Transform, DEFAULT_ETA, DEFAULT_MARGIN, DEFAULT_POINTS,
};
use crate::measures::Measure;
use crate::output::fmt17_opt;
use crate::sphere::{self, WeightVector};
use crate::subordination::{FreeSum, SolveOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightMode {
    Uniform,
    /// Row `(n, rep)` uses the sphere sample with seed `seed + rep`.
    Random { seed: u64 },
}

impl WeightMode {
    fn row_seed(&self, rep: usize) -> Option<u64> {
        match self {
            WeightMode::Uniform => None,
            WeightMode::Random { seed } => Some(seed.wrapping_add(rep as u64)),
        }
    }

    pub fn weights(&self, n: usize, rep: usize) -> WeightVector {
        match self.row_seed(rep) {
            None => WeightVector::uniform(n),
            Some(seed) => sphere::sample(n, seed),
        }
    }
}

impl fmt::Display for WeightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightMode::Uniform => f.write_str("uniform"),
            WeightMode::Random { .. } => f.write_str("random"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Delta,
    DeltaEps,
    DeltaTilde,
    Levy,
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delta" | "kolmogorov" => Ok(Metric::Delta),
            "delta_eps" => Ok(Metric::DeltaEps),
            "delta_tilde" => Ok(Metric::DeltaTilde),
            "levy" => Ok(Metric::Levy),
            _ => Err(Error::Parse(format!("unknown metric `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InversionOptions {
    pub eta: f64,
    pub points: usize,
    pub margin: f64,
}

impl Default for InversionOptions {
    fn default() -> Self {
        InversionOptions { eta: DEFAULT_ETA, points: DEFAULT_POINTS, margin: DEFAULT_MARGIN }
    }
}

impl InversionOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::Domain(format!("eta must lie in (0, 1), got {}", self.eta)));
        }
        if self.points < 3 {
            return Err(Error::Domain(format!("grid needs at least 3 points, got {}", self.points)));
        }
        if !(self.margin >= 0.0) || !self.margin.is_finite() {
            return Err(Error::Domain(format!("margin must be nonnegative, got {}", self.margin)));
        }
        Ok(())
    }
}

/// Recovers a free sum on a window that also covers `[-2, 2]`, together with
/// the semicircle law on the same grid and height.
pub fn recover_against_semicircle(
    sum: &FreeSum,
    solver: &SolveOptions,
    inv: &InversionOptions,
) -> Result<(GriddedDistribution, GriddedDistribution)> {
    let bound = sum.support_bound().max(2.0) + inv.margin;
    let transform = FreeSumTransform::new(sum.clone(), *solver);
    let target = recover(&transform, -bound, bound, inv.points, inv.eta)?;
    let reference = recover(&Measure::semicircle(1.0)?, -bound, bound, inv.points, inv.eta)?;
    Ok((target, reference))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateConfig {
    pub n_schedule: Vec<usize>,
    pub weight_mode: WeightMode,
    pub metrics: Vec<Metric>,
    pub reps: usize,
    pub inversion: InversionOptions,
    pub solver: SolveOptions,
    /// `eps` of the restricted Kolmogorov distance.
    pub eps: f64,
    /// Lower height and `eps` of the transform-side pseudometric.
    pub tilde_a: f64,
    pub tilde_eps: f64,
}

impl Default for RateConfig {
    fn default() -> Self {
        RateConfig {
            n_schedule: vec![4, 8, 16, 32, 64],
            weight_mode: WeightMode::Uniform,
            metrics: vec![Metric::Delta],
            reps: 1,
            inversion: InversionOptions::default(),
            solver: SolveOptions::default(),
            eps: 0.5,
            tilde_a: 0.01,
            tilde_eps: 0.2,
        }
    }
}

impl RateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_schedule.is_empty() {
            return Err(Error::Domain("n schedule is empty".into()));
        }
        if self.n_schedule.contains(&0) {
            return Err(Error::Domain("every n must be positive".into()));
        }
        if self.n_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("n schedule must be strictly increasing".into()));
        }
        if self.reps == 0 {
            return Err(Error::Domain("reps must be positive".into()));
        }
        if self.metrics.is_empty() {
            return Err(Error::Domain("no metric requested".into()));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) || !(self.tilde_eps > 0.0 && self.tilde_eps < 1.0) {
            return Err(Error::Domain("eps parameters must lie in (0, 1)".into()));
        }
        if !(self.tilde_a > 0.0 && self.tilde_a < 1.0) {
            return Err(Error::Domain("tilde_a must lie in (0, 1)".into()));
        }
        self.inversion.validate()?;
        self.solver.validate()
    }

    fn wants(&self, m: Metric) -> bool {
        self.metrics.contains(&m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub rep: usize,
    pub seed: Option<u64>,
    pub weight_mode: String,
    /// Distinct summands after grouping equal dilations.
    pub groups: usize,
    pub tail_mass: Option<f64>,
    pub delta: Option<DistanceEstimate>,
    pub delta_eps: Option<DistanceEstimate>,
    pub delta_tilde: Option<DistanceEstimate>,
    pub levy: Option<DistanceEstimate>,
    pub failure: Option<String>,
}

impl RateRow {
    pub fn metric(&self, m: Metric) -> Option<DistanceEstimate> {
        match m {
            Metric::Delta => self.delta,
            Metric::DeltaEps => self.delta_eps,
            Metric::DeltaTilde => self.delta_tilde,
            Metric::Levy => self.levy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub used: usize,
    /// Rows dropped for nonpositive or non-finite values.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricFit {
    pub metric: Metric,
    pub fit: Option<SlopeFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub config: RateConfig,
    pub rows: Vec<RateRow>,
    pub fits: Vec<MetricFit>,
}

fn rate_row(mu: &Measure, cfg: &RateConfig, n: usize, rep: usize) -> RateRow {
    let theta = cfg.weight_mode.weights(n, rep);
    let mut row = RateRow {
        n,
        rep,
        seed: cfg.weight_mode.row_seed(rep),
        weight_mode: cfg.weight_mode.to_string(),
        groups: 0,
        tail_mass: None,
        delta: None,
        delta_eps: None,
        delta_tilde: None,
        levy: None,
        failure: None,
    };
    let outcome = (|| -> Result<()> {
        let sum = FreeSum::weighted(mu, &theta)?;
        row.groups = sum.group_count();
        if cfg.wants(Metric::Delta) || cfg.wants(Metric::DeltaEps) || cfg.wants(Metric::Levy) {
            let (target, reference) = recover_against_semicircle(&sum, &cfg.solver, &cfg.inversion)?;
            row.tail_mass = Some(target.tail_mass);
            if cfg.wants(Metric::Delta) {
                row.delta = Some(kolmogorov(&target, &reference));
            }
            if cfg.wants(Metric::DeltaEps) {
                row.delta_eps = Some(delta_eps(&target, &reference, cfg.eps)?);
            }
            if cfg.wants(Metric::Levy) {
                row.levy = Some(levy(&target, &reference));
            }
        }
        if cfg.wants(Metric::DeltaTilde) {
            let transform = FreeSumTransform::new(sum, cfg.solver);
            let semicircle = Measure::semicircle(1.0)?;
            row.delta_tilde = Some(delta_tilde(&transform, &semicircle, cfg.tilde_a, cfg.tilde_eps)?);
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        row.failure = Some(e.to_string());
    }
    row
}

/// Distances from `mu_theta` to the semicircle law along an `n` schedule.
/// Rows run in parallel and come back sorted by `(n, rep)`.
pub fn rate_experiment(mu: &Measure, cfg: &RateConfig) -> Result<RateReport> {
    cfg.validate()?;
    let keys: Vec<(usize, usize)> =
        cfg.n_schedule.iter().flat_map(|&n| (0..cfg.reps).map(move |r| (n, r))).collect();
    let rows: Vec<RateRow> = keys.par_iter().map(|&(n, rep)| rate_row(mu, cfg, n, rep)).collect();
    let fits = cfg
        .metrics
        .iter()
        .map(|&m| MetricFit { metric: m, fit: metric_fit(&rows, m, usize::MAX).ok() })
        .collect();
    Ok(RateReport { config: cfg.clone(), rows, fits })
}

/// Weighted fit of one metric over rows with `n <= up_to`.
fn metric_fit(rows: &[RateRow], m: Metric, up_to: usize) -> Result<SlopeFit> {
    let pts: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter(|r| r.n <= up_to)
        .filter_map(|r| r.metric(m).map(|d| (r.n as f64, d.value, d.error)))
        .collect();
    fit_loglog_slope_weighted(&pts)
}

impl RateReport {
    pub fn fit(&self, m: Metric) -> Option<SlopeFit> {
        self.fits.iter().find(|f| f.metric == m).and_then(|f| f.fit)
    }

    /// Median of a metric over reps, per `n`, in schedule order.
    pub fn medians(&self, m: Metric) -> Vec<(usize, Option<f64>)> {
        self.config
            .n_schedule
            .iter()
            .map(|&n| {
                let vals: Vec<f64> = self.rows.iter().filter(|r| r.n == n).filter_map(|r| r.metric(m)).map(|d| d.value).collect();
                (n, median(&vals))
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,rep,seed,weight_mode,delta,delta_err,delta_eps,delta_tilde,levy,slope_running")?;
        let primary = self.config.metrics[0];
        for row in &self.rows {
            let running = metric_fit(&self.rows, primary, row.n).ok().map(|f| f.slope);
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                row.n,
                row.rep,
                row.seed.map(|s| s.to_string()).unwrap_or_default(),
                row.weight_mode,
                fmt17_opt(row.delta.map(|d| d.value)),
                fmt17_opt(row.delta.map(|d| d.error)),
                fmt17_opt(row.delta_eps.map(|d| d.value)),
                fmt17_opt(row.delta_tilde.map(|d| d.value)),
                fmt17_opt(row.levy.map(|d| d.value)),
                fmt17_opt(running),
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[k] } else { 0.5 * (v[k - 1] + v[k]) })
}

/// Ordinary least squares of `log y` on `log n`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    let weighted: Vec<(f64, f64, f64)> = points.iter().map(|&(n, y)| (n, y, f64::NAN)).collect();
    fit_loglog_slope_weighted(&weighted)
}

/// Weighted least squares of `log y` on `log n`. A row `(n, y, err)` gets
/// weight `1/err^2`. Unless every kept row carries a positive finite error,
/// all rows get weight 1. Nonpositive `y` rows are skipped.
pub fn fit_loglog_slope_weighted(points: &[(f64, f64, f64)]) -> Result<SlopeFit> {
    let mut skipped = 0;
    let mut rows = Vec::with_capacity(points.len());
    for &(n, y, err) in points {
        if !(y > 0.0) || !y.is_finite() || !(n > 0.0) {
            skipped += 1;
            continue;
        }
        rows.push((n.ln(), y.ln(), err.powi(-2)));
    }
    if !rows.iter().all(|r| r.2 > 0.0 && r.2.is_finite()) {
        rows.iter_mut().for_each(|r| r.2 = 1.0);
    }
    if rows.len() < 3 {
        return Err(Error::Domain(format!("slope fit needs 3 positive rows, got {}", rows.len())));
    }
    let sw: f64 = rows.iter().map(|r| r.2).sum();
    let mx = rows.iter().map(|r| r.2 * r.0).sum::<f64>() / sw;
    let my = rows.iter().map(|r| r.2 * r.1).sum::<f64>() / sw;
    let sxx: f64 = rows.iter().map(|r| r.2 * (r.0 - mx).powi(2)).sum();
    let sxy: f64 = rows.iter().map(|r| r.2 * (r.0 - mx) * (r.1 - my)).sum();
    let syy: f64 = rows.iter().map(|r| r.2 * (r.1 - my).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::Domain("slope fit needs at least two distinct n".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = rows.iter().map(|r| r.2 * (r.1 - intercept - slope * r.0).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(SlopeFit { slope, intercept, r_squared, used: rows.len(), skipped })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonIdReport {
    pub count: usize,
    /// `sqrt(sum sigma_i^2)`.
    pub b_n: f64,
    /// `sum T_i^3 / B_n^3` with `T_i` the support radius.
    pub l_n: f64,
    pub delta: DistanceEstimate,
    pub ratio: f64,
}

/// Kolmogorov distance of `(nu_1 ⊞ ... ⊞ nu_n)` rescaled by `1/B_n` to the semicircle law.
pub fn nonid_experiment(measures: &[Measure], solver: &SolveOptions, inv: &InversionOptions) -> Result<NonIdReport> {
    if measures.is_empty() {
        return Err(Error::Domain("no measures given".into()));
    }
    for (i, m) in measures.iter().enumerate() {
        let var = m.variance();
        if !(var > 0.0) {
            return Err(Error::Domain(format!("measure {i} has zero variance")));
        }
        if m.mean().abs() > 1e-12 * (1.0 + m.support_radius()) {
            return Err(Error::Domain(format!("measure {i} is not centred (mean {})", m.mean())));
        }
    }
    let b_n = measures.iter().map(|m| m.variance()).sum::<f64>().sqrt();
    let l_n = measures.iter().map(|m| m.support_radius().powi(3)).sum::<f64>() / b_n.powi(3);
    let scaled: Vec<Measure> = measures.iter().map(|m| m.dilate(1.0 / b_n)).collect::<Result<_>>()?;
    let sum = FreeSum::new(&scaled)?;
    let (target, reference) = recover_against_semicircle(&sum, solver, inv)?;
    let delta = kolmogorov(&target, &reference);
    Ok(NonIdReport { count: measures.len(), b_n, l_n, delta, ratio: delta.value / l_n })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportReport {
    pub n: usize,
    pub max_abs_theta: f64,
    pub sum_abs_cubes: f64,
    pub sum_cubes: f64,
    pub sum_fourth: f64,
    pub support_radius: f64,
    pub m3: f64,
    /// `384 L^4 sum theta^4 + 3 |m_3 sum theta^3|`.
    pub r_theta: f64,
    /// Half-excess `5 L^3 sum |theta|^3` over 2.
    pub bound_kargin: f64,
    /// Half-excess `2 r_theta` over 2.
    pub bound_paper: f64,
    pub kargin_interval: [f64; 2],
    pub paper_interval: [f64; 2],
    pub detected_support: Option<[f64; 2]>,
    /// `max |theta_i| < 1/(6L)` and `r_theta <= 1/2`.
    pub preconditions_met: bool,
    /// `None` when the preconditions fail.
    pub contained_paper: Option<bool>,
    pub contained_kargin: Option<bool>,
    pub threshold: f64,
    pub eta: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SupportOptions {
    pub threshold: f64,
    pub eta: f64,
    pub points: usize,
    pub margin: f64,
}

impl Default for SupportOptions {
    fn default() -> Self {
        SupportOptions { threshold: 1e-5, eta: 1e-4, points: 24_001, margin: 0.5 }
    }
}

/// The support enclosure quantities of `mu_theta`.
pub fn support_bounds(mu: &Measure, theta: &WeightVector) -> (f64, f64, f64, bool) {
    let l = mu.support_radius();
    let m3 = mu.moment(3);
    let fourth = theta.sum_pow(4);
    let cubes = theta.sum_pow(3);
    let r_theta = 384.0 * l.powi(4) * fourth + 3.0 * (m3 * cubes).abs();
    let kargin = 5.0 * l.powi(3) * theta.sum_abs_pow(3);
    let pre = theta.max_abs() * 6.0 * l < 1.0 && r_theta <= 0.5;
    (r_theta, kargin, 2.0 * r_theta, pre)
}

/// Detects the support of `mu_theta` from its transform at a small height
/// and compares it with the enclosures.
///
/// A grid point counts as inside the support when the recovered density
/// exceeds `threshold + (2 eta/pi) |d/dx Re G(x + i eta)|`. Outside the
/// support the smoothed density is `(eta/pi) |d/dx Re G|` to first order, so
/// the allowance removes the Cauchy-kernel spill-over of nearby mass.
pub fn support_experiment(
    mu: &Measure,
    theta: &WeightVector,
    solver: &SolveOptions,
    opts: &SupportOptions,
) -> Result<SupportReport> {
    if !(opts.threshold > 0.0) || !(opts.eta > 0.0) || opts.points < 3 {
        return Err(Error::Domain("support detection needs positive threshold and eta, and 3+ points".into()));
    }
    let (r_theta, bound_kargin, bound_paper, pre) = support_bounds(mu, theta);
    let sum = FreeSum::weighted(mu, theta)?;
    let half = sum.support_bound().max(2.0 + bound_paper.min(bound_kargin)) + opts.margin;
    let xs = uniform_grid(-half, half, opts.points);
    let transform = FreeSumTransform::new(sum, *solver);
    let gs = transform.eval_line(&xs, opts.eta)?;
    let h = xs[1] - xs[0];
    let inside: Vec<bool> = (0..xs.len())
        .map(|i| {
            let density = -gs[i].im / std::f64::consts::PI;
            let (lo, hi) = (i.saturating_sub(1), (i + 1).min(xs.len() - 1));
            let slope = (gs[hi].re - gs[lo].re) / (h * (hi - lo) as f64);
            density > opts.threshold + 2.0 * opts.eta / std::f64::consts::PI * slope.abs()
        })
        .collect();
    let first = inside.iter().position(|&b| b);
    let last = inside.iter().rposition(|&b| b);
    let detected = first.zip(last).map(|(a, b)| [xs[a], xs[b]]);
    let kargin_interval = [-2.0 - bound_kargin, 2.0 + bound_kargin];
    let paper_interval = [-2.0 - bound_paper, 2.0 + bound_paper];
    let contained_kargin = detected.map(|[a, b]| a > kargin_interval[0] && b < kargin_interval[1]);
    let contained_paper = if pre {
        detected.map(|[a, b]| a >= paper_interval[0] && b <= paper_interval[1])
    } else {
        None
    };
    Ok(SupportReport {
        n: theta.len(),
        max_abs_theta: theta.max_abs(),
        sum_abs_cubes: theta.sum_abs_pow(3),
        sum_cubes: theta.sum_pow(3),
        sum_fourth: theta.sum_pow(4),
        support_radius: mu.support_radius(),
        m3: mu.moment(3),
        r_theta,
        bound_kargin,
        bound_paper,
        kargin_interval,
        paper_interval,
        detected_support: detected,
        preconditions_met: pre,
        contained_paper,
        contained_kargin,
        threshold: opts.threshold,
        eta: opts.eta,
        points: opts.points,
    })
}

/// Roots of the monic cubic `w^3 + a w^2 + b w + c`, by Cardano's formula
/// with the numerically larger cube root and one Newton polish per root.
pub fn cubic_roots(a: Complex64, b: Complex64, c: Complex64) -> Result<[Complex64; 3]> {
    let shift = a / 3.0;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let disc = (q * q / 4.0 + p * p * p / 27.0).sqrt();
    let u3 = {
        let plus = -q / 2.0 + disc;
        let minus = -q / 2.0 - disc;
        if plus.norm() >= minus.norm() { plus } else { minus }
    };
    let unit = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
    let mut roots = if u3.norm() == 0.0 {
        [Complex64::new(0.0, 0.0); 3]
    } else {
        let u = u3.powf(1.0 / 3.0);
        let mut t = [Complex64::new(0.0, 0.0); 3];
        let mut uk = u;
        for root in &mut t {
            *root = uk - p / (3.0 * uk);
            uk *= unit;
        }
        t
    };
    for r in &mut roots {
        *r -= shift;
        let f = ((*r + a) * *r + b) * *r + c;
        let df = (3.0 * *r + 2.0 * a) * *r + b;
        if df.norm() > 0.0 {
            *r -= f / df;
        }
    }
    if roots.iter().any(|r| !r.is_finite()) {
        return Err(Error::RootFinding(format!("cubic with coefficients {a}, {b}, {c}")));
    }
    Ok(roots)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootLabel {
    Omega1,
    Omega2,
    Omega3,
    OmegaTilde1,
    OmegaTilde2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResidualOptions {
    /// Region `|Re z| <= 2 - eps_hat`, `a_hat <= Im z <= 3` where `Z_1 = omega_3` is expected.
    pub eps_hat: f64,
    pub a_hat: f64,
}

impl Default for ResidualOptions {
    fn default() -> Self {
        ResidualOptions { eps_hat: 0.3, a_hat: 0.05 }
    }
}

/// Terms of the cubic `P` and quadratic `Q` equations satisfied by the first
/// subordination function, at one point. Weights are sorted so that the first
/// has the smallest square.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionalEqTerms {
    pub z: UpperHalfPoint,
    pub subordinators: Vec<Complex64>,
    pub i1: Complex64,
    pub i2: Complex64,
    pub i3: f64,
    pub i4: Complex64,
    pub i5: f64,
    pub r: Complex64,
    pub m1: Complex64,
    pub m2: Complex64,
    pub m3_term: f64,
    pub q: Complex64,
    pub r2: Complex64,
    /// Smallest-modulus root of `P`, then the closed-form pair.
    pub omega: [Complex64; 3],
    /// The two non-smallest roots of `P` from the general cubic solver.
    pub omega_cubic: [Complex64; 2],
    pub omega_tilde: [Complex64; 2],
    pub residual_p: f64,
    pub residual_q: f64,
    pub vieta_sum: f64,
    pub vieta_product: f64,
    /// Set distance between the closed-form pair and the cubic-solver pair.
    pub root_formula_gap: f64,
    pub matched_root: RootLabel,
    pub matched_distance: f64,
    pub matched_root_q: RootLabel,
    pub matched_distance_q: f64,
    pub in_region: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualPoint {
    pub z: UpperHalfPoint,
    pub terms: Option<FunctionalEqTerms>,
    pub failure: Option<String>,
}

fn nearest(target: Complex64, candidates: &[(RootLabel, Complex64)]) -> (RootLabel, f64) {
    candidates
        .iter()
        .map(|(l, w)| (*l, (w - target).norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("candidates are nonempty")
}

/// Assembles the functional-equation terms at every grid point. Failures are
/// recorded per point.
pub fn functional_residuals(
    mu: &Measure,
    theta: &WeightVector,
    z_grid: &[UpperHalfPoint],
    solver: &SolveOptions,
    opts: &ResidualOptions,
) -> Result<Vec<ResidualPoint>> {
    let mut sorted: Vec<f64> = theta.as_slice().to_vec();
    sorted.sort_by(|a, b| (a * a).total_cmp(&(b * b)));
    let theta = WeightVector::new(sorted)?;
    let sum = FreeSum::weighted(mu, &theta)?;
    let parts: Vec<Measure> = sum.measures().cloned().collect();
    let m3 = mu.moment(3);
    Ok(z_grid
        .par_iter()
        .map(|&z| match terms_at(&sum, &parts, &theta, m3, z, solver, opts) {
            Ok(t) => ResidualPoint { z, terms: Some(t), failure: None },
            Err(e) => ResidualPoint { z, terms: None, failure: Some(e.to_string()) },
        })
        .collect())
}

fn terms_at(
    sum: &FreeSum,
    parts: &[Measure],
    theta: &WeightVector,
    m3: f64,
    point: UpperHalfPoint,
    solver: &SolveOptions,
    opts: &ResidualOptions,
) -> Result<FunctionalEqTerms> {
    let sol = sum.solve(point, solver)?;
    let z = point.z();
    let zs = &sol.subordinators;
    let th = theta.as_slice();
    let z1 = zs[0];
    let mut j1 = Complex64::new(0.0, 0.0);
    let mut j2 = Complex64::new(0.0, 0.0);
    let mut j4 = Complex64::new(0.0, 0.0);
    let mut k1 = Complex64::new(0.0, 0.0);
    let mut cube_tail = 0.0;
    for i in 1..zs.len() {
        let (t, w) = (th[i], zs[i]);
        let (t2, t3) = (t * t, t * t * t);
        let fi = cauchy_c(&parts[i], w).inv();
        j1 += fi - w + t2 / w + t3 * m3 / (w * w);
        j2 += t2 / z1 - t2 / w;
        j4 += m3 * (t3 / (z1 * z1) - t3 / (w * w));
        k1 += fi - w + t2 / w;
        cube_tail += t3;
    }
    let i3 = th[0] * th[0];
    let i5 = -m3 * cube_tail;
    let z1sq = z1 * z1;
    let (i1, i2, i4) = (z1sq * j1, z1sq * j2, z1sq * j4);
    let r = i1 + i2 + i4 + i5;

    let p = |w: Complex64| ((w - z) * w + (1.0 - i3)) * w - r;
    let m1 = z1 * k1;
    let m2 = z1 * j2;
    let q = m1 + m2 + i3;
    let qpoly = |w: Complex64| (w - z) * w + 1.0 - q;

    let mut cubic = cubic_roots(-z, Complex64::new(1.0 - i3, 0.0), -r)?;
    cubic.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    let w1 = cubic[0];
    let r2 = 4.0 * i3 + (2.0 * z - 3.0 * w1) * w1;
    let root = sqrt_cut(z * z - 4.0 + r2)?;
    let w2 = 0.5 * (z - root) - 0.5 * w1;
    let w3 = 0.5 * (z + root) - 0.5 * w1;
    let pair = [cubic[1], cubic[2]];
    let gap_direct = (w2 - pair[0]).norm().max((w3 - pair[1]).norm());
    let gap_swapped = (w2 - pair[1]).norm().max((w3 - pair[0]).norm());

    let q1 = z * z - 4.0 + 4.0 * q;
    let qroot = sqrt_cut(q1)?;
    let wt1 = 0.5 * (z - qroot);
    let wt2 = 0.5 * (z + qroot);

    let (matched_root, matched_distance) =
        nearest(z1, &[(RootLabel::Omega1, w1), (RootLabel::Omega2, w2), (RootLabel::Omega3, w3)]);
    let (matched_root_q, matched_distance_q) =
        nearest(z1, &[(RootLabel::OmegaTilde1, wt1), (RootLabel::OmegaTilde2, wt2)]);
    let in_region = point.re().abs() <= 2.0 - opts.eps_hat && point.im() >= opts.a_hat && point.im() <= 3.0;

    Ok(FunctionalEqTerms {
        z: point,
        subordinators: zs.clone(),
        i1,
        i2,
        i3,
        i4,
        i5,
        r,
        m1,
        m2,
        m3_term: i3,
        q,
        r2,
        omega: [w1, w2, w3],
        omega_cubic: pair,
        omega_tilde: [wt1, wt2],
        residual_p: p(z1).norm(),
        residual_q: qpoly(z1).norm(),
        vieta_sum: (w1 + w2 + w3 - z).norm(),
        vieta_product: (w1 * w2 * w3 - r).norm(),
        root_formula_gap: gap_direct.min(gap_swapped),
        matched_root,
        matched_distance,
        matched_root_q,
        matched_distance_q,
        in_region,
    })
}

/// Summary statistics of a residual sweep, serialized to JSON by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualSummary {
    pub points: usize,
    pub failures: usize,
    pub max_residual_p_scaled: f64,
    pub max_residual_q_scaled: f64,
    pub max_vieta_sum: f64,
    pub max_vieta_product: f64,
    pub max_root_formula_gap: f64,
    pub region_points: usize,
    pub region_matches_omega3: usize,
    pub max_region_distance_omega3: f64,
}

pub fn summarize_residuals(points: &[ResidualPoint]) -> ResidualSummary {
    let terms: Vec<&FunctionalEqTerms> = points.iter().filter_map(|p| p.terms.as_ref()).collect();
    let fold = |f: &dyn Fn(&FunctionalEqTerms) -> f64| terms.iter().fold(0.0f64, |m, t| m.max(f(t)));
    let region: Vec<&&FunctionalEqTerms> = terms.iter().filter(|t| t.in_region).collect();
    ResidualSummary {
        points: points.len(),
        failures: points.len() - terms.len(),
        max_residual_p_scaled: fold(&|t| t.residual_p / (1.0 + t.z.z().norm()).powi(3)),
        max_residual_q_scaled: fold(&|t| t.residual_q / (1.0 + t.z.z().norm()).powi(2)),
        max_vieta_sum: fold(&|t| t.vieta_sum),
        max_vieta_product: fold(&|t| t.vieta_product),
        max_root_formula_gap: fold(&|t| t.root_formula_gap),
        region_points: region.len(),
        region_matches_omega3: region.iter().filter(|t| t.matched_root == RootLabel::Omega3).count(),
        max_region_distance_omega3: region.iter().fold(0.0f64, |m, t| m.max((t.omega[2] - t.subordinators[0]).norm())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inversion::{AnalyticLaw, FnTransform};

    fn pt(re: f64, im: f64) -> UpperHalfPoint {
        UpperHalfPoint::new(re, im).unwrap()
    }

    #[test]
    fn slope_fits() {
        let ns = [4.0, 8.0, 16.0, 32.0, 64.0];
        let f = fit_loglog_slope(&ns.iter().map(|&n| (n, 3.0 / n)).collect::<Vec<_>>()).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        let f = fit_loglog_slope(&ns.iter().map(|&n| (n, 0.7 / n.sqrt())).collect::<Vec<_>>()).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        let noise = [1.05, 0.95, 1.03, 0.97, 1.0, 1.04, 0.96];
        let pts: Vec<(f64, f64)> = (0..7).map(|i| {
            let n = 2f64.powi(i + 2);
            (n, noise[i as usize] / n.sqrt())
        }).collect();
        let f = fit_loglog_slope(&pts).unwrap();
        assert!((f.slope + 0.5).abs() < 0.05);
        let f = fit_loglog_slope(&[(1.0, 1.0), (2.0, 0.0), (3.0, 0.5), (4.0, 0.4)]).unwrap();
        assert_eq!((f.used, f.skipped), (3, 1));
        assert!(fit_loglog_slope(&[(1.0, 1.0), (2.0, 0.5)]).is_err());
    }

    #[test]
    fn cubic_roots_match_products() {
        let roots = [Complex64::new(0.1, 0.2), Complex64::new(-1.0, 0.5), Complex64::new(2.0, -0.3)];
        let a = -(roots[0] + roots[1] + roots[2]);
        let b = roots[0] * roots[1] + roots[0] * roots[2] + roots[1] * roots[2];
        let c = -(roots[0] * roots[1] * roots[2]);
        let found = cubic_roots(a, b, c).unwrap();
        for r in roots {
            assert!(found.iter().any(|f| (f - r).norm() < 1e-13), "{found:?}");
        }
        let triple = cubic_roots(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)).unwrap();
        assert!(triple.iter().all(|r| r.norm() == 0.0));
    }

    #[test]
    fn support_formulas() {
        let b = Measure::bernoulli();
        let (r, k, p, pre) = support_bounds(&b, &WeightVector::uniform(1024));
        assert_eq!(r, 0.375);
        assert_eq!(k, 0.15625);
        assert_eq!(p, 0.75);
        assert!(pre);
        let (r, _, _, pre) = support_bounds(&b, &WeightVector::uniform(100));
        assert!((r - 3.84).abs() < 1e-12);
        assert!(!pre);
    }

    #[test]
    fn support_detection_finds_the_free_binomial_edge() {
        let b = Measure::bernoulli();
        let rep = support_experiment(&b, &WeightVector::uniform(1024), &SolveOptions::default(), &SupportOptions::default()).unwrap();
        let [lo, hi] = rep.detected_support.unwrap();
        let edge = 2.0 * (1.0 - 1.0 / 1024.0f64).sqrt();
        assert!((hi - edge).abs() < 0.01 && (lo + edge).abs() < 0.01, "{lo} {hi}");
        assert_eq!(rep.contained_paper, Some(true));
        assert_eq!(rep.contained_kargin, Some(true));
        let small = support_experiment(&b, &WeightVector::uniform(100), &SolveOptions::default(), &SupportOptions::default()).unwrap();
        assert_eq!(small.contained_paper, None);
    }

    #[test]
    fn residuals_vanish_for_two_bernoullis() {
        let pts = functional_residuals(
            &Measure::bernoulli(),
            &WeightVector::uniform(2),
            &[pt(1.0, 1.0), pt(0.0, 2.0)],
            &SolveOptions::default(),
            &ResidualOptions::default(),
        )
        .unwrap();
        let t = pts[0].terms.as_ref().unwrap();
        assert!(t.residual_p <= 1e-9 && t.residual_q <= 1e-9, "{t:?}");
        assert!(t.vieta_sum <= 1e-9 && t.vieta_product <= 1e-9);
        let t = pts[1].terms.as_ref().unwrap();
        assert_eq!(t.matched_root_q, RootLabel::OmegaTilde2);
        assert!(t.omega_tilde[0].im <= 0.5);
    }

    #[test]
    fn residuals_with_skewed_measure_and_random_weights() {
        let mu = Measure::binomial(0.25).unwrap();
        let theta = sphere::sample(9, 2);
        let grid: Vec<UpperHalfPoint> = (0..12).map(|i| pt(-1.5 + 0.25 * i as f64, 0.1 + 0.2 * i as f64)).collect();
        let pts = functional_residuals(&mu, &theta, &grid, &SolveOptions::default(), &ResidualOptions::default()).unwrap();
        let s = summarize_residuals(&pts);
        assert_eq!(s.failures, 0);
        assert!(s.max_residual_p_scaled <= 1e-10 && s.max_residual_q_scaled <= 1e-10, "{s:?}");
        assert!(s.max_vieta_sum <= 1e-9 && s.max_vieta_product <= 1e-9, "{s:?}");
        assert!(s.max_root_formula_gap <= 1e-8, "{s:?}");
    }

    #[test]
    fn single_weight_rate_row_is_direct_distance() {
        let mu = Measure::binomial(0.25).unwrap().standardize().unwrap();
        let cfg = RateConfig { n_schedule: vec![1], metrics: vec![Metric::Delta], ..Default::default() };
        let rep = rate_experiment(&mu, &cfg).unwrap();
        let d = rep.rows[0].delta.unwrap();
        let direct = kolmogorov(&AnalyticLaw::Measure(mu.clone()), &AnalyticLaw::semicircle()).value;
        assert!((d.value - direct).abs() <= d.error, "{d:?} vs {direct}");
    }

    #[test]
    fn pipeline_matches_closed_form_binomial() {
        let n = 8usize;
        let cfg = RateConfig { n_schedule: vec![n], ..Default::default() };
        let rep = rate_experiment(&Measure::bernoulli(), &cfg).unwrap();
        let pipeline = rep.rows[0].delta.unwrap();
        let oracle = FnTransform(move |z: Complex64| {
            let nf = n as f64;
            let root = sqrt_cut(z * z - 4.0 + 4.0 / nf)?;
            Ok(0.5 * (1.0 - z * z / nf).inv() * ((nf - 2.0) / nf * z - root))
        });
        let bound = 3.0 + 2.0 / (n as f64).sqrt();
        let closed = recover(&oracle, -bound, bound, DEFAULT_POINTS, DEFAULT_ETA).unwrap();
        let sc = recover(&Measure::semicircle(1.0).unwrap(), -bound, bound, DEFAULT_POINTS, DEFAULT_ETA).unwrap();
        let k = kolmogorov(&closed, &sc);
        assert!((pipeline.value - k.value).abs() <= pipeline.error + k.error, "{pipeline:?} {k:?}");
    }

    #[test]
    fn rate_csv_and_ordering() {
        let cfg = RateConfig {
            n_schedule: vec![4, 8, 16],
            weight_mode: WeightMode::Random { seed: 7 },
            metrics: vec![Metric::Delta, Metric::Levy, Metric::DeltaEps],
            reps: 2,
            ..Default::default()
        };
        let rep = rate_experiment(&Measure::bernoulli(), &cfg).unwrap();
        let keys: Vec<(usize, usize)> = rep.rows.iter().map(|r| (r.n, r.rep)).collect();
        assert_eq!(keys, vec![(4, 0), (4, 1), (8, 0), (8, 1), (16, 0), (16, 1)]);
        for r in &rep.rows {
            assert!(r.failure.is_none(), "{r:?}");
            let d = r.delta.unwrap().value;
            assert!(r.levy.unwrap().value <= d + 1e-12);
            assert!(r.delta_eps.unwrap().value <= 2.0 * d + 1e-9);
        }
        let csv = rep.to_csv_string();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "n,rep,seed,weight_mode,delta,delta_err,delta_eps,delta_tilde,levy,slope_running");
        assert!(lines[1].starts_with("4,0,7,random,"));
        assert!(lines[6].starts_with("16,1,8,random,"));
        assert!(!lines[6].ends_with(','));
        assert_eq!(rate_experiment(&Measure::bernoulli(), &cfg).unwrap().to_csv_string(), csv);
    }

    #[test]
    fn config_validation() {
        let bad = RateConfig { n_schedule: vec![8, 4], ..Default::default() };
        assert!(rate_experiment(&Measure::bernoulli(), &bad).is_err());
        let bad = RateConfig { reps: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn nonid_examples() {
        let b = Measure::bernoulli();
        let solver = SolveOptions::default();
        let inv = InversionOptions::default();
        let mut ratios = Vec::new();
        for n in [4, 16, 64] {
            let r = nonid_experiment(&vec![b.clone(); n], &solver, &inv).unwrap();
            assert!((r.l_n - 1.0 / (n as f64).sqrt()).abs() < 1e-12);
            ratios.push(r.ratio);
        }
        assert!(ratios.iter().all(|r| *r < 1.0), "{ratios:?}");

        let wide = b.dilate(2.0).unwrap();
        let mix = vec![b.clone(), wide.clone(), b.clone(), wide];
        let r = nonid_experiment(&mix, &solver, &inv).unwrap();
        let bn = (1.0f64 + 4.0 + 1.0 + 4.0).sqrt();
        assert!((r.b_n - bn).abs() < 1e-12);
        assert!((r.l_n - (1.0 + 8.0 + 1.0 + 8.0) / bn.powi(3)).abs() < 1e-12);

        assert!(nonid_experiment(&[Measure::dirac(0.0)], &solver, &inv).is_err());
        let shifted = Measure::from_pairs(&[(0.0, 0.5), (1.0, 0.5)]).unwrap();
        assert!(nonid_experiment(&[shifted], &solver, &inv).is_err());
    }
}
