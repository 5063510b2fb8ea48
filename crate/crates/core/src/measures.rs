//! Compactly supported probability measures on the real line: finite atomic
//! laws and the centred semicircle of variance `c`.

use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Tolerance on the total mass of an atomic measure.
pub const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    #[serde(rename = "x")]
    pub position: f64,
    #[serde(rename = "w")]
    pub weight: f64,
}

/// A probability measure. Constructed only through validating constructors,
/// so atoms are sorted, strictly increasing, with positive weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure", into = "RawMeasure")]
pub enum Measure {
    Atomic(AtomList),
    Semicircle { variance: f64 },
}

/// Sorted atom list; serialized as a bare array under `atoms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AtomList(Vec<Atom>);

impl std::ops::Deref for AtomList {
    type Target = [Atom];
    fn deref(&self) -> &[Atom] {
        &self.0
    }
}

impl<'a> IntoIterator for &'a AtomList {
    type Item = &'a Atom;
    type IntoIter = std::slice::Iter<'a, Atom>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum RawMeasure {
    Atomic { atoms: Vec<Atom> },
    Semicircle { variance: f64 },
}

impl From<Measure> for RawMeasure {
    fn from(m: Measure) -> Self {
        match m {
            Measure::Atomic(atoms) => RawMeasure::Atomic { atoms: atoms.0 },
            Measure::Semicircle { variance } => RawMeasure::Semicircle { variance },
        }
    }
}

impl TryFrom<RawMeasure> for Measure {
    type Error = Error;
    fn try_from(raw: RawMeasure) -> Result<Self> {
        match raw {
            RawMeasure::Atomic { atoms } => Measure::atomic(atoms),
            RawMeasure::Semicircle { variance } => Measure::semicircle(variance),
        }
    }
}

/// Mean, variance, moments and support radius of a measure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentSummary {
    pub mean: f64,
    pub variance: f64,
    /// `m_1 .. m_K`
    pub moments: Vec<f64>,
    /// `beta_1 .. beta_K`
    pub abs_moments: Vec<f64>,
    pub support_radius: f64,
}

impl Measure {
    /// Builds an atomic measure, merging atoms that share a position.
    pub fn atomic(atoms: impl IntoIterator<Item = Atom>) -> Result<Self> {
        let mut atoms: Vec<Atom> = atoms.into_iter().collect();
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        for a in &atoms {
            if !a.position.is_finite() {
                return Err(Error::InvalidMeasure(format!("position {}", a.position)));
            }
            if !(a.weight > 0.0) || !a.weight.is_finite() {
                return Err(Error::InvalidMeasure(format!(
                    "weight {} at {} is not strictly positive",
                    a.weight, a.position
                )));
            }
        }
        atoms.sort_by(|a, b| a.position.total_cmp(&b.position));
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match merged.last_mut() {
                Some(last) if last.position == a.position => last.weight += a.weight,
                _ => merged.push(a),
            }
        }
        let total: f64 = merged.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidMeasure(format!("total mass {total} != 1")));
        }
        Ok(Measure::Atomic(AtomList(merged)))
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::atomic(pairs.iter().map(|&(position, weight)| Atom { position, weight }))
    }

    pub fn dirac(at: f64) -> Self {
        Measure::Atomic(AtomList(vec![Atom { position: at, weight: 1.0 }]))
    }

    /// Symmetric Bernoulli law `(delta_{-1} + delta_1) / 2`.
    pub fn bernoulli() -> Self {
        Measure::Atomic(AtomList(vec![
            Atom { position: -1.0, weight: 0.5 },
            Atom { position: 1.0, weight: 0.5 },
        ]))
    }

    /// Standardized two-point law: `sqrt(q/p)` with mass `p`, `-sqrt(p/q)` with mass `q`.
    pub fn binomial(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidMeasure(format!("binomial parameter {p} not in (0,1)")));
        }
        let q = 1.0 - p;
        Self::from_pairs(&[((q / p).sqrt(), p), (-(p / q).sqrt(), q)])
    }

    pub fn semicircle(variance: f64) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::InvalidMeasure(format!("semicircle variance {variance}")));
        }
        Ok(Measure::Semicircle { variance })
    }

    pub fn atoms(&self) -> Option<&[Atom]> {
        match self {
            Measure::Atomic(a) => Some(a),
            Measure::Semicircle { .. } => None,
        }
    }

    /// `m_k = int x^k dmu`.
    pub fn moment(&self, k: u32) -> f64 {
        match self {
            Measure::Atomic(atoms) => atoms
                .iter()
                .map(|a| a.weight * a.position.powi(k as i32))
                .sum(),
            Measure::Semicircle { variance } => {
                if k % 2 == 1 {
                    0.0
                } else {
                    variance.powi(k as i32 / 2) * catalan(k / 2)
                }
            }
        }
    }

    /// `beta_k = int |x|^k dmu`.
    pub fn abs_moment(&self, k: u32) -> f64 {
        match self {
            Measure::Atomic(atoms) => atoms
                .iter()
                .map(|a| a.weight * a.position.abs().powi(k as i32))
                .sum(),
            Measure::Semicircle { variance } => {
                if k % 2 == 0 {
                    return self.moment(k);
                }
                // (1/pi) int_0^2 x^k sqrt(4 - x^2) dx via x = 2 sin t
                let k = k as f64;
                let standard = (2f64.powf(k + 1.0) / PI)
                    * (ln_gamma((k + 1.0) / 2.0) + ln_gamma(1.5) - ln_gamma(k / 2.0 + 2.0)).exp();
                variance.powf(k / 2.0) * standard
            }
        }
    }

    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    pub fn variance(&self) -> f64 {
        match self {
            Measure::Atomic(atoms) => {
                let m = self.mean();
                atoms
                    .iter()
                    .map(|a| a.weight * (a.position - m).powi(2))
                    .sum()
            }
            Measure::Semicircle { variance } => *variance,
        }
    }

    /// Smallest `L` with `supp mu` inside `[-L, L]`.
    pub fn support_radius(&self) -> f64 {
        match self {
            Measure::Atomic(atoms) => atoms.iter().map(|a| a.position.abs()).fold(0.0, f64::max),
            Measure::Semicircle { variance } => 2.0 * variance.sqrt(),
        }
    }

    pub fn summary(&self, max_order: u32) -> MomentSummary {
        MomentSummary {
            mean: self.mean(),
            variance: self.variance(),
            moments: (1..=max_order).map(|k| self.moment(k)).collect(),
            abs_moments: (1..=max_order).map(|k| self.abs_moment(k)).collect(),
            support_radius: self.support_radius(),
        }
    }

    /// Push-forward under `x -> c x`.
    pub fn dilate(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Domain(format!("dilation factor {c} must be positive")));
        }
        Ok(match self {
            Measure::Atomic(atoms) => Measure::Atomic(AtomList(
                atoms
                    .iter()
                    .map(|a| Atom { position: c * a.position, weight: a.weight })
                    .collect(),
            )),
            Measure::Semicircle { variance } => Measure::Semicircle { variance: c * c * variance },
        })
    }

    /// Dilation by a signed factor; `c < 0` also reflects. Used for weight
    /// vectors, whose entries may be negative.
    pub fn scale(&self, c: f64) -> Result<Self> {
        if c > 0.0 {
            return self.dilate(c);
        }
        if !(c < 0.0) || !c.is_finite() {
            return Err(Error::Domain(format!("scale factor {c} must be non-zero")));
        }
        Ok(match self {
            Measure::Atomic(atoms) => Measure::Atomic(AtomList(
                atoms
                    .iter()
                    .rev()
                    .map(|a| Atom { position: c * a.position, weight: a.weight })
                    .collect(),
            )),
            Measure::Semicircle { variance } => Measure::Semicircle { variance: c * c * variance },
        })
    }

    /// Shift by `-mean` and dilate to unit variance.
    pub fn standardize(&self) -> Result<Self> {
        let var = self.variance();
        if !(var > 1e-300) {
            return Err(Error::DegenerateMeasure("variance is zero".into()));
        }
        match self {
            Measure::Atomic(atoms) => {
                let m = self.mean();
                let s = var.sqrt();
                Measure::atomic(atoms.iter().map(|a| Atom {
                    position: (a.position - m) / s,
                    weight: a.weight,
                }))
                .or_else(|_| {
                    // Rounding in the shift can leave the mass off by an ulp
                    // or two; the atoms themselves are still valid.
                    Ok(Measure::Atomic(AtomList(
                        atoms
                            .iter()
                            .map(|a| Atom { position: (a.position - m) / s, weight: a.weight })
                            .collect(),
                    )))
                })
            }
            Measure::Semicircle { .. } => Measure::semicircle(1.0),
        }
    }

    /// Distribution function `mu((-inf, x])`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Measure::Atomic(atoms) => atoms
                .iter()
                .take_while(|a| a.position <= x)
                .map(|a| a.weight)
                .sum::<f64>()
                .min(1.0),
            Measure::Semicircle { variance } => semicircle_cdf(x / variance.sqrt()),
        }
    }
}

impl FromStr for Measure {
    type Err = Error;

    /// Presets: `bernoulli`, `binomial:<p>`, `semicircle:<c>`, `dirac:<a>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let number = |a: Option<&str>| -> Result<f64> {
            a.ok_or_else(|| Error::Parse(format!("preset `{name}` needs a parameter")))?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("preset `{s}`: {e}")))
        };
        match name {
            "bernoulli" if arg.is_none() => Ok(Measure::bernoulli()),
            "binomial" => Measure::binomial(number(arg)?),
            "semicircle" => Measure::semicircle(arg.map_or(Ok(1.0), |a| number(Some(a)))?),
            "dirac" => Ok(Measure::dirac(number(arg)?)),
            _ => Err(Error::Parse(format!("unknown measure preset `{s}`"))),
        }
    }
}

pub fn catalan(k: u32) -> f64 {
    let mut c = 1.0;
    for j in 0..k {
        c = c * 2.0 * (2.0 * j as f64 + 1.0) / (j as f64 + 2.0);
    }
    c
}

/// Density of the standard semicircle law on `[-2, 2]`.
pub fn semicircle_density(x: f64) -> f64 {
    if x.abs() >= 2.0 {
        0.0
    } else {
        (4.0 - x * x).sqrt() / (2.0 * PI)
    }
}

/// Distribution function of the standard semicircle law.
pub fn semicircle_cdf(x: f64) -> f64 {
    if x <= -2.0 {
        return 0.0;
    }
    if x >= 2.0 {
        return 1.0;
    }
    (0.5 + x * (4.0 - x * x).sqrt() / (4.0 * PI) + (x / 2.0).asin() / PI).clamp(0.0, 1.0)
}
