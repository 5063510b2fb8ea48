//! Free cumulants, the truncated K-transform series and the superconvergence
//! function `phi_theta` of a weighted sum.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::Measure;
use crate::sphere::WeightVector;

pub const DEFAULT_ORDER: usize = 32;

/// Free cumulants `kappa_1 .. kappa_N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CumulantSequence {
    pub kappa: Vec<f64>,
    /// Support radius of the measure the cumulants came from, when known.
    pub source_support_radius: Option<f64>,
}

impl CumulantSequence {
    pub fn order(&self) -> usize {
        self.kappa.len()
    }

    /// `kappa_m` with 1-based `m`.
    pub fn get(&self, m: usize) -> f64 {
        self.kappa[m - 1]
    }

    pub fn of_measure(mu: &Measure, order: usize) -> Self {
        let moments: Vec<f64> = (1..=order as u32).map(|k| mu.moment(k)).collect();
        let mut seq = moments_to_cumulants(&moments);
        seq.source_support_radius = Some(mu.support_radius());
        seq
    }
}

/// Coefficients `[x^d] M(x)^s` for `s = 0..=max_power`, `d = 0..=max_degree`,
/// where `M(x) = 1 + sum_k m_k x^k`.
fn moment_series_powers(moments: &[f64], max_power: usize, max_degree: usize) -> Vec<Vec<f64>> {
    let series = |d: usize| if d == 0 { 1.0 } else { moments.get(d - 1).copied().unwrap_or(0.0) };
    let mut powers = vec![vec![0.0; max_degree + 1]; max_power + 1];
    powers[0][0] = 1.0;
    for s in 1..=max_power {
        let (done, rest) = powers.split_at_mut(s);
        let prev = &done[s - 1];
        let cur = &mut rest[0];
        for d in 0..=max_degree {
            cur[d] = (0..=d).map(|j| prev[j] * series(d - j)).sum();
        }
    }
    powers
}

/// Inverts `m_n = sum_{s=1}^n kappa_s [x^{n-s}] M(x)^s` with `m_0 = 1`.
pub fn moments_to_cumulants(moments: &[f64]) -> CumulantSequence {
    let n_max = moments.len();
    let powers = moment_series_powers(moments, n_max, n_max);
    let mut kappa = vec![0.0; n_max];
    for n in 1..=n_max {
        let lower: f64 = (1..n).map(|s| kappa[s - 1] * powers[s][n - s]).sum();
        // [x^0] M^n = 1
        kappa[n - 1] = moments[n - 1] - lower;
    }
    CumulantSequence { kappa, source_support_radius: None }
}

/// Moments `m_1 .. m_N` from free cumulants; exact inverse of [`moments_to_cumulants`].
pub fn cumulants_to_moments(kappa: &CumulantSequence) -> Vec<f64> {
    let n_max = kappa.order();
    let mut moments: Vec<f64> = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        // Only m_1 .. m_{n-1} enter [x^{n-s}] M^s for s >= 1.
        let powers = moment_series_powers(&moments, n, n - 1);
        let m: f64 = (1..=n).map(|s| kappa.get(s) * powers[s][n - s]).sum();
        moments.push(m);
    }
    moments
}

fn series_radius(support_radius: f64) -> f64 {
    if support_radius > 0.0 {
        1.0 / (6.0 * support_radius)
    } else {
        f64::INFINITY
    }
}

fn check_disc(z: Complex64, radius: f64) -> Result<()> {
    let modulus = z.norm();
    if modulus == 0.0 || modulus >= radius {
        return Err(Error::OutOfDisc { modulus, radius });
    }
    Ok(())
}

/// Truncated Laurent series `1/z + sum_{m=1}^N kappa_m z^{m-1}` of the
/// functional inverse of `G`, valid for `0 < |z| < 1/(6L)`.
pub fn k_transform_series(mu: &Measure, z: Complex64, order: usize) -> Result<Complex64> {
    check_disc(z, series_radius(mu.support_radius()))?;
    let kappa = CumulantSequence::of_measure(mu, order);
    Ok(laurent(&kappa.kappa, z))
}

fn laurent(kappa: &[f64], z: Complex64) -> Complex64 {
    // Horner on sum kappa_m z^{m-1}
    let poly = kappa
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &k| acc * z + k);
    z.inv() + poly
}

/// Bound on the discarded tail `sum_{m>N} |kappa_m| |z|^{m-1}` from the
/// cumulant bound `|kappa_m| <= 2L/(m-1) (4L)^{m-1}`; infinite if `4L|z| >= 1`.
pub fn k_series_tail_bound(support_radius: f64, z_abs: f64, order: usize) -> f64 {
    let q = 4.0 * support_radius * z_abs;
    if q >= 1.0 {
        return f64::INFINITY;
    }
    let n = order.max(1) as f64;
    2.0 * support_radius / n * q.powf(n) / (1.0 - q)
}

#[derive(Debug, Clone, Serialize)]
pub struct KarginEntry {
    pub m: usize,
    pub kappa: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct KarginReport {
    pub support_radius: f64,
    pub entries: Vec<KarginEntry>,
    pub all_pass: bool,
}

/// Checks `|kappa_m| <= 2L/(m-1) (4L)^{m-1}` for `m = 2..=N`.
pub fn kargin_bound_check(mu: &Measure, order: usize) -> KarginReport {
    let l = mu.support_radius();
    let kappa = CumulantSequence::of_measure(mu, order);
    let entries: Vec<KarginEntry> = (2..=order)
        .map(|m| {
            let bound = 2.0 * l / (m as f64 - 1.0) * (4.0 * l).powi(m as i32 - 1);
            let k = kappa.get(m);
            // relative slack for rounding in the recursion
            let pass = k.abs() <= bound * (1.0 + 1e-12) + 1e-12;
            KarginEntry { m, kappa: k, bound, pass }
        })
        .collect();
    let all_pass = entries.iter().all(|e| e.pass);
    KarginReport { support_radius: l, entries, all_pass }
}

/// Free cumulants of the weighted sum: `kappa_m(mu_theta) = sum_i theta_i^m kappa_m(mu)`.
pub fn weighted_cumulants(mu: &Measure, theta: &WeightVector, order: usize) -> CumulantSequence {
    let base = CumulantSequence::of_measure(mu, order);
    let kappa = (1..=order)
        .map(|m| {
            let power_sum: f64 = theta.iter().map(|t| t.powi(m as i32)).sum();
            power_sum * base.get(m)
        })
        .collect();
    CumulantSequence {
        kappa,
        source_support_radius: Some(mu.support_radius() * theta.max_abs()),
    }
}

/// `phi_theta(z) = sum_i K_i(z) - (n-1)/z`, the K-transform of `mu_theta`,
/// truncated after `N` cumulants. Valid for `0 < |z| < 1/(6 L max|theta_i|)`.
pub fn phi_theta(mu: &Measure, theta: &WeightVector, z: Complex64, order: usize) -> Result<Complex64> {
    check_disc(z, series_radius(mu.support_radius() * theta.max_abs()))?;
    let kappa = weighted_cumulants(mu, theta, order);
    Ok(laurent(&kappa.kappa, z))
}

/// Right-hand side of `|phi_theta(z) - 1/z - z| <= 128 L^4 |z|^3 sum theta^4 + |m_3 sum theta^3| |z|^2`.
pub fn phi_theta_bound(mu: &Measure, theta: &WeightVector, z_abs: f64) -> f64 {
    let l = mu.support_radius();
    let fourth: f64 = theta.iter().map(|t| t.powi(4)).sum();
    let third: f64 = theta.iter().map(|t| t.powi(3)).sum();
    128.0 * l.powi(4) * z_abs.powi(3) * fourth + (mu.moment(3) * third).abs() * z_abs * z_abs
}
