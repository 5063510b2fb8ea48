//! Pointwise solver for the subordination system of a free additive
//! convolution `nu_1 ⊞ ... ⊞ nu_n`.
//!
//! Unknowns are the subordination functions `Z_i(z)`, characterised by
//! `F_i(Z_i) = F_j(Z_j)` for all `i, j` and `sum Z_i - z = (n-1) F_1(Z_1)`.
//! Identical measures share a subordination function, so the system is solved
//! over groups of equal measures with multiplicities.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::complexfn::{f_and_derivative, UpperHalfPoint};
use crate::error::{Error, Result};
use crate::measures::Measure;
use crate::sphere::WeightVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    /// Damped simultaneous fixed-point iteration only.
    FixedPoint,
    /// Newton steps with a fixed-point fallback and a continuation in `Im z`
    /// for cold starts close to the real axis.
    #[default]
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub damping: f64,
    pub method: SolverMethod,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-12, max_iters: 10_000, damping: 1.0, method: SolverMethod::Hybrid }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::Domain(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::Domain("max_iters must be positive".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Domain(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        Ok(())
    }
}

const MIN_DAMPING: f64 = 1.0 / 16.0;
const DAMPING_RESET_SWEEPS: usize = 50;
const IM_SLACK: f64 = 1e-10;
/// Height at which cold starts begin when the target is closer to the axis.
const CONTINUATION_TOP: f64 = 1.0;
const CONTINUATION_TOL: f64 = 1e-10;
/// Height ratio between continuation stages. Near a pole of `F_g` the
/// subordinator scales like the height, and a Newton step started from
/// twice the target lands exactly on the pole; a ratio of 0.6 keeps the first
/// step's relative error near `(1/0.6 - 1)^2`.
const CONTINUATION_RATIO: f64 = 0.6;
/// Newton budget for a warm start before falling back to a cold solve.
const WARM_BUDGET: usize = 60;
/// Iterations allowed per continuation stage before the step is shortened.
const STAGE_BUDGET: usize = 300;
/// Continuation gives up shortening steps beyond this ratio.
const MAX_CONTINUATION_RATIO: f64 = 0.995;

/// Per-point solution with one subordination function per input measure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubordinationSolution {
    pub z: UpperHalfPoint,
    #[serde(rename = "Z")]
    pub subordinators: Vec<Complex64>,
    pub common_f: Complex64,
    #[serde(rename = "G")]
    pub g: Complex64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Solution over groups of identical measures; cheap to keep for warm starts.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSolution {
    pub z: Complex64,
    pub group_z: Vec<Complex64>,
    pub common_f: Complex64,
    pub g: Complex64,
    pub iterations: usize,
    pub residual: f64,
}

/// A free sum prepared for repeated solves.
#[derive(Debug, Clone)]
pub struct FreeSum {
    groups: Vec<Measure>,
    multiplicity: Vec<f64>,
    member_group: Vec<usize>,
}

struct Eval {
    f: Vec<Complex64>,
    df: Vec<Complex64>,
    /// `R_g = F_g(Z_g) - z - sum_h m_h (F_h(Z_h) - Z_h)`
    r: Vec<Complex64>,
    merit: f64,
    residual: f64,
}

impl FreeSum {
    pub fn new(measures: &[Measure]) -> Result<Self> {
        if measures.is_empty() {
            return Err(Error::Domain("free sum needs at least one measure".into()));
        }
        let mut groups: Vec<Measure> = Vec::new();
        let mut multiplicity: Vec<f64> = Vec::new();
        let mut member_group = Vec::with_capacity(measures.len());
        for mu in measures {
            let g = match groups.iter().position(|m| m == mu) {
                Some(g) => g,
                None => {
                    groups.push(mu.clone());
                    multiplicity.push(0.0);
                    groups.len() - 1
                }
            };
            multiplicity[g] += 1.0;
            member_group.push(g);
        }
        Ok(FreeSum { groups, multiplicity, member_group })
    }

    /// Summands `D_{theta_i} mu`; a zero weight contributes `delta_0`.
    pub fn weighted(mu: &Measure, theta: &WeightVector) -> Result<Self> {
        let parts: Vec<Measure> = theta
            .iter()
            .map(|t| if t == 0.0 { Ok(Measure::dirac(0.0)) } else { mu.scale(t) })
            .collect::<Result<_>>()?;
        FreeSum::new(&parts)
    }

    pub fn len(&self) -> usize {
        self.member_group.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_group.is_empty()
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    /// Measures in input order.
    pub fn measures(&self) -> impl Iterator<Item = &Measure> + '_ {
        self.member_group.iter().map(|&g| &self.groups[g])
    }

    /// Sum of the variances of the summands.
    pub fn total_variance(&self) -> f64 {
        self.groups.iter().zip(&self.multiplicity).map(|(m, k)| k * m.variance()).sum()
    }

    pub fn total_mean(&self) -> f64 {
        self.groups.iter().zip(&self.multiplicity).map(|(m, k)| k * m.mean()).sum()
    }

    /// A radius enclosing the support of the free sum.
    pub fn support_bound(&self) -> f64 {
        let sum_l: f64 = self.groups.iter().zip(&self.multiplicity).map(|(m, k)| k * m.support_radius()).sum();
        let max_l = self.groups.iter().fold(0.0f64, |a, m| a.max(m.support_radius()));
        let mean = self.total_mean().abs();
        let centred = 2.0 * self.total_variance().sqrt() + 2.0 * max_l;
        sum_l.min(mean + centred)
    }

    fn evaluate(&self, z: Complex64, zs: &[Complex64]) -> Eval {
        let (f, df): (Vec<Complex64>, Vec<Complex64>) =
            self.groups.iter().zip(zs).map(|(m, &w)| f_and_derivative(m, w)).unzip();
        let shift: Complex64 = self
            .multiplicity
            .iter()
            .zip(f.iter().zip(zs))
            .map(|(k, (fg, zg))| k * (fg - zg))
            .sum();
        let r: Vec<Complex64> = f.iter().map(|fg| fg - z - shift).collect();
        let merit = r.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        let residual = self.system_residual(z, zs, &f);
        Eval { f, df, r, merit, residual }
    }

    /// `max( max_g |F_g - F_1|, |sum_i Z_i - z - (n-1) F_1| ) / max(1, |F_1|)`.
    /// The scaling only matters where `|F| > 1`, e.g. inside spectral gaps
    /// close to the axis where `F` grows like `1/Im z` and an absolute
    /// tolerance would sit below rounding.
    fn system_residual(&self, z: Complex64, zs: &[Complex64], f: &[Complex64]) -> f64 {
        let f1 = f[self.member_group[0]];
        let spread = f.iter().fold(0.0f64, |a, fg| a.max((fg - f1).norm()));
        // sum_i (Z_i - F_1) + F_1 - z, arranged to avoid cancellation at large n
        let balance: Complex64 =
            self.multiplicity.iter().zip(zs).map(|(k, zg)| k * (zg - f1)).sum::<Complex64>() + f1 - z;
        if !spread.is_finite() || !balance.norm().is_finite() {
            return f64::INFINITY;
        }
        spread.max(balance.norm()) / f1.norm().max(1.0)
    }

    fn newton_step(&self, z: Complex64, zs: &[Complex64], eval: &Eval) -> Option<(Vec<Complex64>, Eval)> {
        if eval.df.iter().any(|d| d.norm() < 1e-8 || !d.is_finite()) {
            return None;
        }
        // J = diag(F_g') - 1 c^T with c_h = m_h (F_h' - 1), solved by Sherman-Morrison
        let a: Vec<Complex64> = eval.df.iter().map(|d| d.inv()).collect();
        let c: Vec<Complex64> = self.multiplicity.iter().zip(&eval.df).map(|(k, d)| k * (d - 1.0)).collect();
        let ca: Complex64 = c.iter().zip(&a).map(|(c, a)| c * a).sum();
        let denom = Complex64::new(1.0, 0.0) - ca;
        if denom.norm() < 1e-14 {
            return None;
        }
        let solve = |r: &[Complex64]| -> Vec<Complex64> {
            let car: Complex64 = c.iter().zip(a.iter().zip(r)).map(|(c, (a, r))| c * a * r).sum();
            let s = -car / denom;
            a.iter().zip(r).map(|(a, r)| a * (s - r)).collect()
        };
        let delta = solve(&eval.r);
        if delta.iter().any(|d| !d.is_finite()) {
            return None;
        }
        let norm = |v: &[Complex64]| v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        let step = norm(&delta);
        // Affine invariant acceptance: the simplified correction computed with the
        // current Jacobian has to shrink. Residual norms are useless near poles of F.
        let mut lambda = 1.0;
        for _ in 0..30 {
            let trial: Vec<Complex64> = zs.iter().zip(&delta).map(|(w, d)| w + lambda * d).collect();
            if trial.iter().all(|w| w.im > 0.0) {
                let e = self.evaluate(z, &trial);
                if e.merit.is_finite() {
                    let simplified = norm(&solve(&e.r));
                    if simplified.is_finite() && simplified <= (1.0 - 0.25 * lambda) * step {
                        return Some((trial, e));
                    }
                    if e.merit < eval.merit * (1.0 - 1e-4 * lambda) && lambda < 0.1 {
                        return Some((trial, e));
                    }
                }
            }
            lambda *= 0.5;
        }
        None
    }

    /// Iterates from `start` until the system residual is below `tol`.
    fn iterate(
        &self,
        z: Complex64,
        start: Vec<Complex64>,
        tol: f64,
        budget: usize,
        opts: &SolveOptions,
    ) -> Result<(Vec<Complex64>, Eval, usize)> {
        let mut zs = start;
        let mut eval = self.evaluate(z, &zs);
        let mut alpha = opts.damping;
        let mut shrunk = 0usize;
        for it in 0..budget {
            if eval.residual <= tol {
                return Ok((zs, eval, it));
            }
            if opts.method == SolverMethod::Hybrid {
                if let Some((next, e)) = self.newton_step(z, &zs, &eval) {
                    zs = next;
                    eval = e;
                    continue;
                }
            }
            // Z_g <- (1-a) Z_g + a (z + sum_{j != g} (F_j - Z_j)) = (1-a) Z_g + a (Z_g - R_g)
            let next: Vec<Complex64> = zs.iter().zip(&eval.r).map(|(w, r)| w - alpha * r).collect();
            let e = self.evaluate(z, &next);
            if e.residual > eval.residual {
                alpha = (alpha * 0.5).max(MIN_DAMPING);
                shrunk += 1;
                if shrunk >= DAMPING_RESET_SWEEPS {
                    alpha = opts.damping;
                    shrunk = 0;
                }
            }
            zs = next;
            eval = e;
        }
        if eval.residual <= tol {
            return Ok((zs, eval, budget));
        }
        Err(Error::NoConvergence { iterations: budget, residual: eval.residual })
    }

    fn admissible(&self, z: Complex64, zs: &[Complex64]) -> bool {
        zs.iter().all(|w| w.im >= z.im - IM_SLACK)
    }

    fn finish(&self, z: Complex64, zs: Vec<Complex64>, eval: Eval, iterations: usize) -> GroupSolution {
        let common_f = eval.f[self.member_group[0]];
        GroupSolution { z, group_z: zs, common_f, g: common_f.inv(), iterations, residual: eval.residual }
    }

    fn solve_cold(&self, z: Complex64, opts: &SolveOptions) -> Result<GroupSolution> {
        let groups = self.groups.len();
        if opts.method == SolverMethod::FixedPoint || z.im >= CONTINUATION_TOP {
            let (zs, eval, it) = self.iterate(z, vec![z; groups], opts.tol, opts.max_iters, opts)?;
            return Ok(self.finish(z, zs, eval, it));
        }
        // Continuation in the height: the system is well conditioned far from the
        // axis, and shrinking the height geometrically keeps each Newton start
        // inside its basin. A stage that stalls is retried with a shorter step.
        let budget = STAGE_BUDGET.min(opts.max_iters);
        let mut y = CONTINUATION_TOP;
        let (mut zs, _, mut total) =
            self.iterate(Complex64::new(z.re, y), vec![Complex64::new(z.re, y); groups], CONTINUATION_TOL.max(opts.tol), opts.max_iters, opts)?;
        let mut prev: Option<(f64, Vec<Complex64>)> = None;
        let mut ratio = CONTINUATION_RATIO;
        loop {
            let y_next = (ratio * y).max(z.im);
            let last = y_next <= z.im;
            let tol = if last { opts.tol } else { CONTINUATION_TOL.max(opts.tol) };
            let start = predict(&zs, prev.as_ref(), y, y_next);
            match self.iterate(Complex64::new(z.re, y_next), start, tol, budget, opts) {
                Ok((next, eval, it)) => {
                    total += it;
                    if last {
                        return Ok(self.finish(z, next, eval, total));
                    }
                    prev = Some((y, std::mem::replace(&mut zs, next)));
                    y = y_next;
                    ratio = (ratio * ratio).max(CONTINUATION_RATIO);
                }
                Err(e) => {
                    total += budget;
                    ratio = ratio.sqrt();
                    if ratio > MAX_CONTINUATION_RATIO {
                        // steps are no longer shrinking usefully; spend the full budget
                        let start = predict(&zs, prev.as_ref(), y, z.im);
                        let (next, eval, it) = self
                            .iterate(z, start, opts.tol, opts.max_iters, opts)
                            .map_err(|_| e)?;
                        return Ok(self.finish(z, next, eval, total + it));
                    }
                }
            }
        }
    }

    /// Solves at `z`, optionally warm-started from a nearby solution.
    pub fn solve_groups(
        &self,
        z: UpperHalfPoint,
        opts: &SolveOptions,
        warm: Option<&GroupSolution>,
    ) -> Result<GroupSolution> {
        opts.validate()?;
        let z = z.z();
        if let Some(w) = warm.filter(|w| w.group_z.len() == self.groups.len()) {
            // start no lower than the target height so iterates stay admissible
            let start: Vec<Complex64> =
                w.group_z.iter().map(|s| Complex64::new(s.re, s.im.max(z.im))).collect();
            let budget = if opts.method == SolverMethod::Hybrid { WARM_BUDGET.min(opts.max_iters) } else { opts.max_iters };
            if let Ok((zs, eval, it)) = self.iterate(z, start, opts.tol, budget, opts) {
                if self.admissible(z, &zs) {
                    return Ok(self.finish(z, zs, eval, it));
                }
            }
        }
        let sol = self.solve_cold(z, opts)?;
        if !self.admissible(z, &sol.group_z) {
            let worst = sol.group_z.iter().fold(f64::INFINITY, |a, w| a.min(w.im));
            return Err(Error::NoConvergence {
                iterations: sol.iterations,
                residual: z.im - worst,
            });
        }
        Ok(sol)
    }

    pub fn expand(&self, point: UpperHalfPoint, sol: &GroupSolution) -> SubordinationSolution {
        SubordinationSolution {
            z: point,
            subordinators: self.member_group.iter().map(|&g| sol.group_z[g]).collect(),
            common_f: sol.common_f,
            g: sol.g,
            iterations: sol.iterations,
            residual: sol.residual,
            converged: true,
        }
    }

    pub fn solve(&self, z: UpperHalfPoint, opts: &SolveOptions) -> Result<SubordinationSolution> {
        let sol = self.solve_groups(z, opts, None)?;
        Ok(self.expand(z, &sol))
    }

    pub fn cauchy(&self, z: UpperHalfPoint, opts: &SolveOptions) -> Result<Complex64> {
        Ok(self.solve_groups(z, opts, None)?.g)
    }

    /// `G` along the horizontal line `x + i eta`, warm-starting each point from
    /// its left neighbour.
    pub fn cauchy_line(&self, xs: &[f64], eta: f64, opts: &SolveOptions) -> Result<Vec<Complex64>> {
        let mut prev: Option<GroupSolution> = None;
        let mut out = Vec::with_capacity(xs.len());
        for &x in xs {
            let point = UpperHalfPoint::new(x, eta)?;
            let sol = self.solve_groups(point, opts, prev.as_ref())?;
            out.push(sol.g);
            prev = Some(sol);
        }
        Ok(out)
    }
}

pub fn solve(measures: &[Measure], z: UpperHalfPoint, opts: &SolveOptions) -> Result<SubordinationSolution> {
    FreeSum::new(measures)?.solve(z, opts)
}

/// Cauchy transform of `measures[0] ⊞ ... ⊞ measures[n-1]`.
pub fn g_free(measures: &[Measure], z: UpperHalfPoint, opts: &SolveOptions) -> Result<Complex64> {
    Ok(solve(measures, z, opts)?.g)
}

/// Cauchy transform of the law of `sum theta_i X_i` for free copies `X_i ~ mu`.
pub fn weighted_sum_g(mu: &Measure, theta: &WeightVector, z: UpperHalfPoint, opts: &SolveOptions) -> Result<Complex64> {
    FreeSum::weighted(mu, theta)?.cauchy(z, opts)
}

/// Secant predictor in `log Z` against `log y`; near a pole of F a subordinator
/// shrinks in proportion to the height.
fn predict(current: &[Complex64], prev: Option<&(f64, Vec<Complex64>)>, y: f64, y_next: f64) -> Vec<Complex64> {
    let Some((y_prev, z_prev)) = prev else { return current.to_vec() };
    let t = (y_next / y).ln() / (y / y_prev).ln();
    let guess: Vec<Complex64> =
        current.iter().zip(z_prev).map(|(w, p)| (w.ln() + (w.ln() - p.ln()) * t).exp()).collect();
    if guess.iter().all(|w| w.is_finite() && w.im > 0.0) {
        guess
    } else {
        current.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complexfn::{cauchy, sqrt_cut};
    use proptest::prelude::*;

    fn pt(re: f64, im: f64) -> UpperHalfPoint {
        UpperHalfPoint::new(re, im).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Closed form for the standardized `n`-fold free binomial sum.
    fn binomial_oracle(n: usize, p: f64, z: Complex64) -> Complex64 {
        let q = 1.0 - p;
        let nf = n as f64;
        let r = (p - q) / (p * q).sqrt();
        let s = r / nf.sqrt();
        let root = sqrt_cut((z + s) * (z + s) - 4.0 + 4.0 / nf).unwrap();
        0.5 * (1.0 - z * (z / nf + s)).inv() * ((nf - 2.0) / nf * z - s - root)
    }

    #[test]
    fn oracle_reduces_to_two_atoms() {
        let z = c(0.3, 0.7);
        let mu = Measure::binomial(0.3).unwrap();
        let direct = cauchy(&mu, pt(0.3, 0.7));
        assert!((binomial_oracle(1, 0.3, z) - direct).norm() < 1e-14);
    }

    #[test]
    fn single_measure() {
        let s = solve(&[Measure::bernoulli()], pt(0.0, 2.0), &SolveOptions::default()).unwrap();
        assert!((s.subordinators[0] - c(0.0, 2.0)).norm() < 1e-15);
        assert!((s.g - c(0.0, -0.4)).norm() < 1e-14);
    }

    #[test]
    fn dirac_pair() {
        let d = Measure::dirac(0.0);
        let s = solve(&[d.clone(), d], pt(0.0, 1.0), &SolveOptions::default()).unwrap();
        assert!((s.g - c(0.0, -1.0)).norm() < 1e-14);
        assert!(s.subordinators.iter().all(|w| (w - c(0.0, 1.0)).norm() < 1e-14));

        let z = pt(0.4, 0.3);
        let g = g_free(&[Measure::dirac(1.5), Measure::dirac(-0.25)], z, &SolveOptions::default()).unwrap();
        assert!((g - (z.z() - 1.25).inv()).norm() < 1e-13);
    }

    #[test]
    fn bernoulli_pair_is_arcsine() {
        let b = Measure::bernoulli();
        for method in [SolverMethod::FixedPoint, SolverMethod::Hybrid] {
            let opts = SolveOptions { method, ..Default::default() };
            let s = solve(&[b.clone(), b.clone()], pt(0.0, 2.0), &opts).unwrap();
            let expect = c(0.0, 1.0 + 2f64.sqrt());
            assert!(s.subordinators.iter().all(|w| (w - expect).norm() < 1e-10), "{s:?}");
            assert!((s.g - c(0.0, -1.0 / 8f64.sqrt())).norm() < 1e-12);
            assert!(s.residual <= 1e-12);
        }
    }

    #[test]
    fn semicircles_add_variances() {
        let h = Measure::semicircle(0.5).unwrap();
        let g = g_free(&[h.clone(), h], pt(0.0, 1.0), &SolveOptions::default()).unwrap();
        let expect = cauchy(&Measure::semicircle(1.0).unwrap(), pt(0.0, 1.0));
        assert!((g - expect).norm() < 1e-12);
        assert!((g - c(0.0, -0.618_033_988_749_895)).norm() < 1e-12);
    }

    #[test]
    fn weighted_sums_match_binomial_closed_form() {
        let b = Measure::bernoulli();
        let opts = SolveOptions::default();
        let g = weighted_sum_g(&b, &WeightVector::uniform(2), pt(0.0, 2.0), &opts).unwrap();
        assert!((g - c(0.0, -1.0 / 6f64.sqrt())).norm() < 1e-12);
        assert!((g - binomial_oracle(2, 0.5, c(0.0, 2.0))).norm() < 1e-12);

        let g = weighted_sum_g(&b, &WeightVector::uniform(8), pt(0.0, 1.0), &opts).unwrap();
        assert!((g - binomial_oracle(8, 0.5, c(0.0, 1.0))).norm() < 1e-8);

        let mu = Measure::binomial(0.25).unwrap();
        let theta = WeightVector::uniform(5);
        for z in [c(0.1, 0.05), c(-1.2, 0.5), c(2.5, 0.01), c(0.0, 3.0)] {
            let g = weighted_sum_g(&mu, &theta, pt(z.re, z.im), &opts).unwrap();
            assert!((g - binomial_oracle(5, 0.25, z)).norm() < 1e-9, "z={z}");
        }

        let g = weighted_sum_g(&mu, &WeightVector::new(vec![1.0]).unwrap(), pt(0.2, 0.4), &opts).unwrap();
        assert!((g - cauchy(&mu, pt(0.2, 0.4))).norm() < 1e-14);
    }

    #[test]
    fn inverse_subordinator_is_a_cauchy_transform() {
        let mus = [Measure::bernoulli(), Measure::binomial(0.3).unwrap(), Measure::semicircle(2.0).unwrap()];
        let opts = SolveOptions::default();
        for (y, tol) in [(10.0, 5e-2), (100.0, 5e-3)] {
            let s = solve(&mus, pt(0.0, y), &opts).unwrap();
            for w in &s.subordinators {
                let g = w.inv();
                assert!(g.im < 0.0);
                assert!((c(0.0, y) * g - 1.0).norm() < tol);
            }
        }
    }

    #[test]
    fn warm_and_cold_starts_agree() {
        let mu = Measure::binomial(0.3).unwrap();
        let sum = FreeSum::weighted(&mu, &crate::sphere::sample(12, 4)).unwrap();
        let opts = SolveOptions::default();
        let xs: Vec<f64> = (0..200).map(|i| -3.0 + 0.03 * i as f64).collect();
        let warm = sum.cauchy_line(&xs, 1e-3, &opts).unwrap();
        for (x, gw) in xs.iter().zip(&warm).step_by(7) {
            let gc = sum.cauchy(pt(*x, 1e-3), &opts).unwrap();
            assert!((gw - gc).norm() <= 1e-9 * (1.0 + gc.norm()), "x={x}: {gw} vs {gc}");
        }
    }

    #[test]
    fn grouping_and_errors() {
        let b = Measure::bernoulli();
        let sum = FreeSum::weighted(&b, &WeightVector::uniform(64)).unwrap();
        assert_eq!(sum.group_count(), 1);
        assert_eq!(sum.len(), 64);
        assert!(matches!(FreeSum::new(&[]), Err(Error::Domain(_))));
        let bad = SolveOptions { damping: 0.0, ..Default::default() };
        assert!(solve(&[b], pt(0.0, 1.0), &bad).is_err());
    }

    #[test]
    fn reports_non_convergence() {
        let mus = [Measure::bernoulli(), Measure::binomial(0.2).unwrap()];
        let opts = SolveOptions { max_iters: 2, method: SolverMethod::FixedPoint, ..Default::default() };
        let err = solve(&mus, pt(0.1, 0.01), &opts).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { .. }));
    }

    fn small_measure() -> impl Strategy<Value = Measure> {
        prop_oneof![
            (0.05f64..0.95).prop_map(|p| Measure::binomial(p).unwrap()),
            (0.2f64..3.0).prop_map(|v| Measure::semicircle(v).unwrap()),
            prop::collection::vec((-2.0f64..2.0, 0.1f64..1.0), 1..4).prop_map(|pairs| {
                let total: f64 = pairs.iter().map(|p| p.1).sum();
                let norm: Vec<(f64, f64)> = pairs.iter().map(|&(x, w)| (x, w / total)).collect();
                Measure::from_pairs(&norm).unwrap()
            }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn solutions_respect_invariants(
            mus in prop::collection::vec(small_measure(), 1..5),
            re in -3.0f64..3.0,
            im in 0.02f64..2.0,
        ) {
            let z = pt(re, im);
            let s = solve(&mus, z, &SolveOptions::default()).unwrap();
            prop_assert!(s.residual <= 1e-12);
            prop_assert!(s.g.im < 0.0);
            prop_assert!(s.common_f.im >= im - 1e-10);
            for w in &s.subordinators {
                prop_assert!(w.im >= im - 1e-10);
            }
            let mut rev = mus.clone();
            rev.reverse();
            let r = solve(&rev, z, &SolveOptions::default()).unwrap();
            prop_assert!((r.g - s.g).norm() <= 1e-9 * (1.0 + s.g.norm()));
            for (a, b) in s.subordinators.iter().zip(r.subordinators.iter().rev()) {
                prop_assert!((a - b).norm() <= 1e-8 * (1.0 + a.norm()));
            }
        }
    }
}

