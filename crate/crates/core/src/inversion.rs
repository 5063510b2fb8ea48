//! Stieltjes–Perron recovery of densities and distribution functions from
//! Cauchy transforms, and the distances used to compare laws.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::complexfn::{cauchy_c, sqrt_cut, UpperHalfPoint};
use crate::error::{Error, Result};
use crate::measures::Measure;
use crate::output::fmt17;
use crate::subordination::{FreeSum, SolveOptions};

pub const DEFAULT_ETA: f64 = 1e-3;
pub const DEFAULT_POINTS: usize = 4001;
/// Margin added on both sides of a support bound to form the window.
pub const DEFAULT_MARGIN: f64 = 1.0;
/// Negative density values below this are an inversion failure.
pub const NEGATIVE_DENSITY_TOL: f64 = 1e-12;
/// Grid lines are split into this many independently cold-started chunks,
/// so results do not depend on the number of threads.
pub const LINE_CHUNKS: usize = 8;
/// Sampling density used when a distance involves smooth analytic laws.
const DENSE_POINTS: usize = 20_001;
pub const QUAD_TOL: f64 = 1e-9;
pub const TILDE_POINTS: usize = 801;

/// Something that evaluates a Cauchy transform in the upper half-plane.
pub trait Transform: Sync {
    fn eval(&self, z: Complex64) -> Result<Complex64>;

    /// `G(x + i eta)` for every `x`.
    fn eval_line(&self, xs: &[f64], eta: f64) -> Result<Vec<Complex64>> {
        xs.par_iter().map(|&x| self.eval(Complex64::new(x, eta))).collect()
    }
}

fn upper(z: Complex64) -> Result<Complex64> {
    UpperHalfPoint::from_complex(z).map(|p| p.z())
}

impl Transform for Measure {
    fn eval(&self, z: Complex64) -> Result<Complex64> {
        Ok(cauchy_c(self, upper(z)?))
    }
}

/// Cauchy transform of a free sum, solved pointwise.
#[derive(Debug, Clone)]
pub struct FreeSumTransform {
    pub sum: FreeSum,
    pub opts: SolveOptions,
}

impl FreeSumTransform {
    pub fn new(sum: FreeSum, opts: SolveOptions) -> Self {
        FreeSumTransform { sum, opts }
    }
}

impl Transform for FreeSumTransform {
    fn eval(&self, z: Complex64) -> Result<Complex64> {
        self.sum.cauchy(UpperHalfPoint::from_complex(z)?, &self.opts)
    }

    fn eval_line(&self, xs: &[f64], eta: f64) -> Result<Vec<Complex64>> {
        let chunk = xs.len().div_ceil(LINE_CHUNKS).max(1);
        let parts: Vec<Vec<Complex64>> = xs
            .par_chunks(chunk)
            .map(|part| self.sum.cauchy_line(part, eta, &self.opts))
            .collect::<Result<_>>()?;
        Ok(parts.concat())
    }
}

/// Wraps a closure as a [`Transform`].
pub struct FnTransform<F>(pub F);

impl<F> Transform for FnTransform<F>
where
    F: Fn(Complex64) -> Result<Complex64> + Sync,
{
    fn eval(&self, z: Complex64) -> Result<Complex64> {
        (self.0)(upper(z)?)
    }
}

/// Laws with closed-form distribution functions.
#[derive(Debug, Clone, PartialEq)]
pub enum AnalyticLaw {
    Measure(Measure),
    /// Arcsine law on `[-r, r]`.
    Arcsine { radius: f64 },
}

impl AnalyticLaw {
    /// The arcsine law on `[-2, 2]`, i.e. `Bernoulli ⊞ Bernoulli`.
    pub fn arcsine() -> Self {
        AnalyticLaw::Arcsine { radius: 2.0 }
    }

    pub fn semicircle() -> Self {
        AnalyticLaw::Measure(Measure::semicircle(1.0).expect("unit variance is valid"))
    }
}

impl Transform for AnalyticLaw {
    fn eval(&self, z: Complex64) -> Result<Complex64> {
        match self {
            AnalyticLaw::Measure(m) => m.eval(z),
            AnalyticLaw::Arcsine { radius } => {
                let z = upper(z)?;
                Ok(sqrt_cut(z * z - radius * radius)?.inv())
            }
        }
    }
}

/// A distribution function that the distances can sample.
pub trait Cdf {
    fn cdf(&self, x: f64) -> f64;
    /// Left limit `F(x-)`.
    fn cdf_left(&self, x: f64) -> f64 {
        self.cdf(x)
    }
    /// Points where the function jumps or changes slope.
    fn knots(&self) -> Vec<f64>;
    /// An interval outside which the function is (nearly) constant.
    fn range(&self) -> (f64, f64);
    /// Whether the function is only known on its knots, in which case no
    /// extra dense sampling is needed between them.
    fn piecewise_linear(&self) -> bool;
    /// Bound on the deviation from the true distribution function.
    fn error(&self) -> f64 {
        0.0
    }
}

impl Cdf for AnalyticLaw {
    fn cdf(&self, x: f64) -> f64 {
        match self {
            AnalyticLaw::Measure(m) => m.cdf(x),
            AnalyticLaw::Arcsine { radius } => {
                if x <= -radius {
                    0.0
                } else if x >= *radius {
                    1.0
                } else {
                    0.5 + (x / radius).asin() / PI
                }
            }
        }
    }

    fn cdf_left(&self, x: f64) -> f64 {
        match self {
            AnalyticLaw::Measure(Measure::Atomic(atoms)) => {
                atoms.iter().take_while(|a| a.position < x).map(|a| a.weight).sum::<f64>().min(1.0)
            }
            _ => self.cdf(x),
        }
    }

    fn knots(&self) -> Vec<f64> {
        match self {
            AnalyticLaw::Measure(Measure::Atomic(atoms)) => atoms.iter().map(|a| a.position).collect(),
            _ => Vec::new(),
        }
    }

    fn range(&self) -> (f64, f64) {
        let r = match self {
            AnalyticLaw::Measure(m) => m.support_radius(),
            AnalyticLaw::Arcsine { radius } => *radius,
        };
        (-r, r)
    }

    fn piecewise_linear(&self) -> bool {
        matches!(self, AnalyticLaw::Measure(Measure::Atomic(_)))
    }
}

/// Density and distribution function sampled on a uniform grid, recovered
/// from `-Im G(x + i eta) / pi`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GriddedDistribution {
    pub x_min: f64,
    pub x_max: f64,
    pub eta: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub cdf: Vec<f64>,
    /// `1 - trapezoid integral of the density over the window`.
    pub tail_mass: f64,
    /// Centres of the point masses matching `G` at the two window edges; they
    /// extend the smoothed distribution function beyond the window.
    left_centre: f64,
    right_centre: f64,
}

fn cauchy_kernel_cdf(x: f64, centre: f64, eta: f64) -> f64 {
    0.5 + ((x - centre) / eta).atan() / PI
}

/// Uniform grid of `points >= 2` nodes on `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let h = (hi - lo) / (points - 1) as f64;
    (0..points).map(|i| if i + 1 == points { hi } else { lo + h * i as f64 }).collect()
}

/// Recovers the `eta`-smoothed law from its Cauchy transform on `[x_min, x_max]`.
pub fn recover(g: &dyn Transform, x_min: f64, x_max: f64, points: usize, eta: f64) -> Result<GriddedDistribution> {
    if !(x_min < x_max) || !x_min.is_finite() || !x_max.is_finite() {
        return Err(Error::Domain(format!("empty window [{x_min}, {x_max}]")));
    }
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::Domain(format!("eta must be positive, got {eta}")));
    }
    if points < 2 {
        return Err(Error::Domain("inversion grid needs at least two points".into()));
    }
    let grid = uniform_grid(x_min, x_max, points);
    let values = g.eval_line(&grid, eta)?;
    let mut density = Vec::with_capacity(points);
    for (x, gv) in grid.iter().zip(&values) {
        let d = -gv.im / PI;
        if !d.is_finite() {
            return Err(Error::Inversion(format!("non-finite transform value at x = {x}")));
        }
        if d < -NEGATIVE_DENSITY_TOL {
            return Err(Error::Inversion(format!("negative density {d} at x = {x}")));
        }
        density.push(d.max(0.0));
    }

    // G(z) ~ 1/(z - c) near each window edge
    let centre = |x: f64, gv: Complex64| (Complex64::new(x, eta) - gv.inv()).re;
    let left_centre = centre(x_min, values[0]);
    let right_centre = centre(x_max, values[points - 1]);
    let left_tail = cauchy_kernel_cdf(x_min, left_centre, eta);

    let h = (x_max - x_min) / (points - 1) as f64;
    let mut cdf = Vec::with_capacity(points);
    let mut acc = 0.0;
    cdf.push(left_tail.clamp(0.0, 1.0));
    for w in density.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        cdf.push((left_tail + acc).clamp(0.0, 1.0));
    }
    Ok(GriddedDistribution {
        x_min,
        x_max,
        eta,
        grid,
        density,
        cdf,
        tail_mass: (1.0 - acc).max(0.0),
        left_centre,
        right_centre,
    })
}

/// Two-height Richardson step `2 f_eta - f_{2 eta}` on the same grid; removes
/// the first-order smoothing bias of the density.
pub fn recover_richardson(g: &dyn Transform, x_min: f64, x_max: f64, points: usize, eta: f64) -> Result<GriddedDistribution> {
    let fine = recover(g, x_min, x_max, points, eta)?;
    let coarse = recover(g, x_min, x_max, points, 2.0 * eta)?;
    let mut out = fine.clone();
    let h = (x_max - x_min) / (points - 1) as f64;
    out.density = fine.density.iter().zip(&coarse.density).map(|(a, b)| (2.0 * a - b).max(0.0)).collect();
    let left = (2.0 * fine.cdf[0] - coarse.cdf[0]).clamp(0.0, 1.0);
    let mut acc = 0.0;
    out.cdf = std::iter::once(left)
        .chain(out.density.windows(2).map(|w| {
            acc += 0.5 * h * (w[0] + w[1]);
            (left + acc).clamp(0.0, 1.0)
        }))
        .collect();
    out.tail_mass = (1.0 - acc).max(0.0);
    Ok(out)
}

impl GriddedDistribution {
    pub fn step(&self) -> f64 {
        (self.x_max - self.x_min) / (self.grid.len() - 1) as f64
    }

    pub fn max_density(&self) -> f64 {
        self.density.iter().fold(0.0, |a: f64, &d| a.max(d))
    }

    /// Mass of the smoothed law left of the window.
    pub fn left_tail(&self) -> f64 {
        self.cdf[0]
    }

    /// Mass of the smoothed law right of the window.
    pub fn right_tail(&self) -> f64 {
        1.0 - cauchy_kernel_cdf(self.x_max, self.right_centre, self.eta)
    }

    /// Smoothing bias bound: for density bounded by `M`, convolving the
    /// distribution function with the Cauchy kernel of width `eta` moves it by
    /// at most `(2 M eta / pi)(1 + ln(1 + 1/(M eta)))`.
    pub fn smoothing_error(&self) -> f64 {
        let m = self.max_density();
        if m == 0.0 {
            return 0.0;
        }
        let me = m * self.eta;
        2.0 * me / PI * (1.0 + (1.0 + 1.0 / me).ln())
    }

    /// Grid resolution term: interpolation and trapezoid error of the
    /// distribution function.
    pub fn grid_error(&self) -> f64 {
        self.step() * self.max_density()
    }

    /// Deviation bound from the unsmoothed distribution function.
    pub fn cdf_error(&self) -> f64 {
        self.smoothing_error() + self.grid_error() + 0.01 * (self.left_tail() + self.right_tail())
    }

    /// Linear interpolation inside the window, Cauchy-kernel tails outside.
    pub fn cdf_at(&self, x: f64) -> f64 {
        if x <= self.x_min {
            let at_edge = cauchy_kernel_cdf(self.x_min, self.left_centre, self.eta);
            let scale = if at_edge > 0.0 { self.cdf[0] / at_edge } else { 0.0 };
            return (scale * cauchy_kernel_cdf(x, self.left_centre, self.eta)).clamp(0.0, 1.0);
        }
        let last = self.grid.len() - 1;
        if x >= self.x_max {
            let at_edge = 1.0 - cauchy_kernel_cdf(self.x_max, self.right_centre, self.eta);
            let beyond = 1.0 - cauchy_kernel_cdf(x, self.right_centre, self.eta);
            let gap = 1.0 - self.cdf[last];
            let scale = if at_edge > 0.0 { gap / at_edge } else { 0.0 };
            return (1.0 - scale * beyond).clamp(0.0, 1.0);
        }
        let h = self.step();
        let i = (((x - self.x_min) / h).floor() as usize).min(last - 1);
        let t = ((x - self.grid[i]) / h).clamp(0.0, 1.0);
        self.cdf[i] + t * (self.cdf[i + 1] - self.cdf[i])
    }

    pub fn density_at(&self, x: f64) -> f64 {
        if x < self.x_min || x > self.x_max {
            return 0.0;
        }
        let h = self.step();
        let last = self.grid.len() - 1;
        let i = (((x - self.x_min) / h).floor() as usize).min(last - 1);
        let t = ((x - self.grid[i]) / h).clamp(0.0, 1.0);
        self.density[i] + t * (self.density[i + 1] - self.density[i])
    }

    /// CSV with a `# eta=..,tail_mass=..` line followed by `x,density,cdf` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# eta={},tail_mass={}", fmt17(self.eta), fmt17(self.tail_mass))?;
        writeln!(out, "x,density,cdf")?;
        for ((x, d), c) in self.grid.iter().zip(&self.density).zip(&self.cdf) {
            writeln!(out, "{},{},{}", fmt17(*x), fmt17(*d), fmt17(*c))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

impl Cdf for GriddedDistribution {
    fn cdf(&self, x: f64) -> f64 {
        self.cdf_at(x)
    }

    fn knots(&self) -> Vec<f64> {
        self.grid.clone()
    }

    fn range(&self) -> (f64, f64) {
        (self.x_min, self.x_max)
    }

    fn piecewise_linear(&self) -> bool {
        true
    }

    fn error(&self) -> f64 {
        self.cdf_error()
    }
}

/// A distance together with a bound on its numerical error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistanceEstimate {
    pub value: f64,
    pub error: f64,
}

fn sample_points(a: &dyn Cdf, b: &dyn Cdf, lo: f64, hi: f64, shifts: &[f64]) -> Vec<f64> {
    let mut pts: Vec<f64> = Vec::new();
    for s in shifts {
        pts.extend(a.knots().iter().map(|k| k + s));
    }
    pts.extend(b.knots());
    if !(a.piecewise_linear() && b.piecewise_linear()) {
        pts.extend(uniform_grid(lo, hi, DENSE_POINTS));
    }
    pts.push(lo);
    pts.push(hi);
    pts.retain(|x| x.is_finite() && *x >= lo && *x <= hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

fn union_range(a: &dyn Cdf, b: &dyn Cdf) -> (f64, f64) {
    let (a0, a1) = a.range();
    let (b0, b1) = b.range();
    let (lo, hi) = (a0.min(b0), a1.max(b1));
    if lo < hi {
        (lo, hi)
    } else {
        (lo - 1.0, hi + 1.0)
    }
}

/// Kolmogorov distance `sup_x |F_A(x) - F_B(x)|`.
pub fn kolmogorov(a: &dyn Cdf, b: &dyn Cdf) -> DistanceEstimate {
    let (lo, hi) = union_range(a, b);
    let pts = sample_points(a, b, lo, hi, &[0.0]);
    let value = pts.iter().fold(0.0f64, |m, &x| {
        m.max((a.cdf(x) - b.cdf(x)).abs()).max((a.cdf_left(x) - b.cdf_left(x)).abs())
    });
    DistanceEstimate { value, error: a.error() + b.error() }
}

/// Lévy distance: the least `s` with `F_A(x-s) - s <= F_B(x) <= F_A(x+s) + s` for all `x`.
pub fn levy(a: &dyn Cdf, b: &dyn Cdf) -> DistanceEstimate {
    let (lo, hi) = union_range(a, b);
    let holds = |s: f64| -> bool {
        let pts = sample_points(a, b, lo - s - 1.0, hi + s + 1.0, &[s, -s]);
        pts.iter().all(|&x| {
            let slack = 1e-12;
            a.cdf(x - s) - s <= b.cdf(x) + slack
                && a.cdf_left(x - s) - s <= b.cdf_left(x) + slack
                && b.cdf(x) <= a.cdf(x + s) + s + slack
                && b.cdf_left(x) <= a.cdf_left(x + s) + s + slack
        })
    };
    let (mut low, mut high) = (0.0, 1.0);
    if holds(0.0) {
        high = 0.0;
    }
    for _ in 0..60 {
        if high - low <= 1e-13 {
            break;
        }
        let mid = 0.5 * (low + high);
        if holds(mid) {
            high = mid;
        } else {
            low = mid;
        }
    }
    DistanceEstimate { value: high, error: a.error() + b.error() }
}

/// `sup_{x in [-2+eps, 2-eps]} |(F_A(x) - F_A(-2+eps)) - (F_B(x) - F_B(-2+eps))|`.
pub fn delta_eps(a: &dyn Cdf, b: &dyn Cdf, eps: f64) -> Result<DistanceEstimate> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    let (lo, hi) = (-2.0 + eps, 2.0 - eps);
    let base_a = a.cdf(lo);
    let base_b = b.cdf(lo);
    let mut pts = sample_points(a, b, lo, hi, &[0.0]);
    pts.extend(uniform_grid(lo, hi, DEFAULT_POINTS));
    let value = pts.iter().fold(0.0f64, |m, &x| {
        let right = ((a.cdf(x) - base_a) - (b.cdf(x) - base_b)).abs();
        let left = if x > lo { ((a.cdf_left(x) - base_a) - (b.cdf_left(x) - base_b)).abs() } else { 0.0 };
        m.max(right).max(left)
    });
    Ok(DistanceEstimate { value, error: 2.0 * (a.error() + b.error()) })
}

/// Result of an adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

const SIMPSON_MAX_DEPTH: u32 = 40;

/// Adaptive Simpson with absolute tolerance `tol` and Richardson correction.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64) -> Result<Quadrature>
where
    F: Fn(f64) -> Result<f64>,
{
    struct State<'f, F> {
        f: &'f F,
        evaluations: usize,
        error: f64,
    }

    fn step<F: Fn(f64) -> Result<f64>>(
        st: &mut State<'_, F>,
        (a, fa): (f64, f64),
        (m, fm): (f64, f64),
        (b, fb): (f64, f64),
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = (st.f)(lm)?;
        let frm = (st.f)(rm)?;
        st.evaluations += 2;
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth >= SIMPSON_MAX_DEPTH || diff.abs() <= 15.0 * tol {
            st.error += diff.abs() / 15.0;
            return Ok(left + right + diff / 15.0);
        }
        let l = step(st, (a, fa), (lm, flm), (m, fm), left, 0.5 * tol, depth + 1)?;
        let r = step(st, (m, fm), (rm, frm), (b, fb), right, 0.5 * tol, depth + 1)?;
        Ok(l + r)
    }

    let mut st = State { f: &f, evaluations: 3, error: 0.0 };
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a)?, f(m)?, f(b)?);
    // one forced split so that symmetric integrands are not mistaken for flat ones
    let value = {
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let (flm, frm) = (f(lm)?, f(rm)?);
        st.evaluations += 2;
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        step(&mut st, (a, fa), (lm, flm), (m, fm), left, 0.5 * tol, 1)?
            + step(&mut st, (m, fm), (rm, frm), (b, fb), right, 0.5 * tol, 1)?
    };
    Ok(Quadrature { value, error: st.error, evaluations: st.evaluations })
}

fn vertical_integral(ga: &dyn Transform, gb: &dyn Transform, u: f64, a: f64) -> Result<Quadrature> {
    adaptive_simpson(
        |v| Ok((ga.eval(Complex64::new(u, v))? - gb.eval(Complex64::new(u, v))?).norm()),
        a,
        1.0,
        QUAD_TOL,
    )
}

fn check_strip(a: f64, eps: f64) -> Result<()> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::Domain(format!("a must lie in (0, 1), got {a}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    Ok(())
}

/// `max_u int_a^1 |G_A(u+iv) - G_B(u+iv)| dv` over `u` in `[-2+eps/2, 2-eps/2]`.
fn strip_sup(ga: &dyn Transform, gb: &dyn Transform, a: f64, eps: f64) -> Result<Quadrature> {
    let us = uniform_grid(-2.0 + 0.5 * eps, 2.0 - 0.5 * eps, TILDE_POINTS);
    let parts: Vec<Quadrature> = us.par_iter().map(|&u| vertical_integral(ga, gb, u, a)).collect::<Result<_>>()?;
    let value = parts.iter().fold(0.0f64, |m, q| m.max(q.value));
    let error = parts.iter().fold(0.0f64, |m, q| m.max(q.error));
    let evaluations = parts.iter().map(|q| q.evaluations).sum();
    Ok(Quadrature { value, error, evaluations })
}

/// Transform-side pseudometric `strip sup + a + eps^{3/2}`.
pub fn delta_tilde(ga: &dyn Transform, gb: &dyn Transform, a: f64, eps: f64) -> Result<DistanceEstimate> {
    check_strip(a, eps)?;
    let q = strip_sup(ga, gb, a, eps)?;
    Ok(DistanceEstimate { value: q.value + a + eps.powf(1.5), error: q.error })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BaiIntegrals {
    /// `int_{-R}^{R} |G_A(u+i) - G_B(u+i)| du`.
    pub line_integral: f64,
    pub line_error: f64,
    /// Estimate of the two tails beyond `|u| = R`, from `O(1/u^2)` decay.
    pub line_tail: f64,
    pub half_width: f64,
    pub strip_sup: f64,
    pub strip_error: f64,
}

/// Transform integrals entering the smoothing inequality for the Kolmogorov distance.
pub fn bai_integrals(ga: &dyn Transform, gb: &dyn Transform, a: f64, eps: f64, half_width: f64) -> Result<BaiIntegrals> {
    check_strip(a, eps)?;
    if !(half_width > 0.0) {
        return Err(Error::Domain(format!("half width must be positive, got {half_width}")));
    }
    let diff = |u: f64| -> Result<f64> {
        let z = Complex64::new(u, 1.0);
        Ok((ga.eval(z)? - gb.eval(z)?).norm())
    };
    let line = adaptive_simpson(diff, -half_width, half_width, QUAD_TOL)?;
    let line_tail = (diff(-half_width)? + diff(half_width)?) * half_width;
    let strip = strip_sup(ga, gb, a, eps)?;
    Ok(BaiIntegrals {
        line_integral: line.value,
        line_error: line.error,
        line_tail,
        half_width,
        strip_sup: strip.value,
        strip_error: strip.error,
    })
}

/// Window `[-bound - margin, bound + margin]` around a support radius.
pub fn window(support_bound: f64, margin: f64) -> (f64, f64) {
    (-support_bound - margin, support_bound + margin)
}
