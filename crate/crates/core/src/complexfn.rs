//! Complex square root with the cut on `[0, inf)`, the upper half-plane
//! newtype, and the Cauchy/reciprocal Cauchy transforms of [`Measure`].

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::measures::Measure;

/// Distance from `[0, inf)` below which a point counts as on the cut.
pub const CUT_EPS: f64 = 1e-14;

/// A point `re + i im` with `im > 0`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UpperHalfPoint {
    re: f64,
    im: f64,
}

impl UpperHalfPoint {
    pub fn new(re: f64, im: f64) -> Result<Self> {
        if !(im > 0.0) || !re.is_finite() || !im.is_finite() {
            return Err(Error::Domain(format!(
                "{re} + {im}i is not in the open upper half-plane"
            )));
        }
        Ok(Self { re, im })
    }

    pub fn from_complex(z: Complex64) -> Result<Self> {
        Self::new(z.re, z.im)
    }

    pub fn re(&self) -> f64 {
        self.re
    }

    pub fn im(&self) -> f64 {
        self.im
    }

    pub fn z(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

fn sgn(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Square root with `arg z` taken in `(0, 2pi)`, so the result always has
/// positive imaginary part. Uses the half-angle formulas with `sgn(0) = 1`.
pub fn sqrt_cut(z: Complex64) -> Result<Complex64> {
    let (u, v) = (z.re, z.im);
    if !u.is_finite() || !v.is_finite() {
        return Err(Error::Domain(format!("non-finite argument {z}")));
    }
    if u >= -CUT_EPS && v.abs() <= CUT_EPS {
        return Err(Error::BranchCut(format!("{z}")));
    }
    let modulus = u.hypot(v);
    // (|z| - u) loses everything to cancellation when u >> |v|; recover it
    // from v^2 = (|z| - u)(|z| + u).
    let (re_sq, im_sq) = if u >= 0.0 {
        let a = 0.5 * (modulus + u);
        (a, 0.25 * v * v / a)
    } else {
        let b = 0.5 * (modulus - u);
        (0.25 * v * v / b, b)
    };
    Ok(Complex64::new(sgn(v) * re_sq.sqrt(), im_sq.sqrt()))
}

/// Cauchy transform `G(z) = int 1/(z - t) mu(dt)` for `z` in the upper half-plane.
pub fn cauchy(mu: &Measure, z: UpperHalfPoint) -> Complex64 {
    cauchy_c(mu, z.z())
}

/// Reciprocal Cauchy transform `F = 1/G`.
pub fn f_transform(mu: &Measure, z: UpperHalfPoint) -> Complex64 {
    cauchy_c(mu, z.z()).inv()
}

/// Semicircle of variance `c` at `z` in the upper half-plane.
pub fn semicircle_cauchy(variance: f64, z: Complex64) -> Complex64 {
    let s = variance.sqrt();
    let w = z / s;
    // w^2 - 4 never touches [0, inf) for Im w > 0.
    let root = sqrt_cut(w * w - 4.0).expect("w^2 - 4 is off the cut for Im w > 0");
    0.5 * (w - root) / s
}

/// Unchecked evaluation for `Im z > 0`; the hot path of the solver.
pub(crate) fn cauchy_c(mu: &Measure, z: Complex64) -> Complex64 {
    match mu {
        Measure::Atomic(atoms) => atoms
            .iter()
            .map(|a| a.weight / (z - a.position))
            .sum(),
        Measure::Semicircle { variance } => semicircle_cauchy(*variance, z),
    }
}

/// `F(z)` and `F'(z)` together.
pub(crate) fn f_and_derivative(mu: &Measure, z: Complex64) -> (Complex64, Complex64) {
    match mu {
        Measure::Atomic(atoms) => {
            let mut g = Complex64::new(0.0, 0.0);
            let mut dg = Complex64::new(0.0, 0.0);
            for a in atoms {
                let r = (z - a.position).inv();
                g += a.weight * r;
                dg -= a.weight * r * r;
            }
            let f = g.inv();
            (f, -dg * f * f)
        }
        Measure::Semicircle { variance } => {
            // F = (z + sqrt(z^2 - 4c)) / 2, F' = (1 + z / sqrt(z^2 - 4c)) / 2
            let c = *variance;
            let s = c.sqrt();
            let w = z / s;
            let root = sqrt_cut(w * w - 4.0).expect("w^2 - 4 is off the cut for Im w > 0") * s;
            (0.5 * (z + root), 0.5 * (1.0 + z / root))
        }
    }
}

/// Cauchy transform continued analytically to every `z` off the support.
/// Used for real arguments, e.g. `G(K(x))` with `x` real.
pub fn cauchy_analytic(mu: &Measure, z: Complex64) -> Result<Complex64> {
    match mu {
        Measure::Atomic(atoms) => {
            if z.im == 0.0 && atoms.iter().any(|a| a.position == z.re) {
                return Err(Error::Domain(format!("{z} is an atom")));
            }
            Ok(cauchy_c(mu, z))
        }
        Measure::Semicircle { variance } => {
            let edge = 2.0 * variance.sqrt();
            if z.im == 0.0 && z.re.abs() <= edge {
                return Err(Error::Domain(format!("{z} lies in the support")));
            }
            // z sqrt(1 - 4c/z^2) with the principal root is analytic off
            // [-2 sqrt c, 2 sqrt c] and behaves like z at infinity.
            let root = z * (1.0 - 4.0 * variance / (z * z)).sqrt();
            Ok((z - root) / (2.0 * variance))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::Measure;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn sqrt_cut_examples() {
        let r = sqrt_cut(c(-4.0, 0.0)).unwrap();
        assert!((r - c(0.0, 2.0)).norm() < 1e-15);
        let r = sqrt_cut(c(0.0, 2.0)).unwrap();
        assert!((r - c(1.0, 1.0)).norm() < 1e-15);
        let r = sqrt_cut(c(-5.0, 0.0)).unwrap();
        assert!((r - c(0.0, 5f64.sqrt())).norm() < 1e-15);
    }

    #[test]
    fn sqrt_cut_lower_half_plane_has_negative_real_part() {
        // arg in (pi, 2pi) -> half-angle in (pi/2, pi)
        let r = sqrt_cut(c(0.0, -2.0)).unwrap();
        assert!((r - c(-1.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn sqrt_cut_rejects_cut() {
        assert!(matches!(sqrt_cut(c(0.0, 0.0)), Err(Error::BranchCut(_))));
        assert!(matches!(sqrt_cut(c(3.0, 0.0)), Err(Error::BranchCut(_))));
        assert!(matches!(sqrt_cut(c(3.0, 1e-15)), Err(Error::BranchCut(_))));
        assert!(sqrt_cut(c(3.0, 1e-10)).is_ok());
    }

    #[test]
    fn sqrt_cut_near_positive_axis_is_accurate() {
        let z = c(1e8, 1e-3);
        let r = sqrt_cut(z).unwrap();
        assert!(((r * r - z) / z).norm() < 1e-15);
        assert!(r.im > 0.0);
    }

    #[test]
    fn upper_half_point_validates() {
        assert!(UpperHalfPoint::new(0.0, 0.0).is_err());
        assert!(UpperHalfPoint::new(0.0, -1.0).is_err());
        assert!(UpperHalfPoint::new(f64::NAN, 1.0).is_err());
        assert!(UpperHalfPoint::new(1.0, 1e-300).is_ok());
    }

    #[test]
    fn cauchy_examples() {
        let i = UpperHalfPoint::new(0.0, 1.0).unwrap();
        let two_i = UpperHalfPoint::new(0.0, 2.0).unwrap();
        let g = cauchy(&Measure::dirac(0.0), i);
        assert!((g - c(0.0, -1.0)).norm() < 1e-15);
        let g = cauchy(&Measure::bernoulli(), two_i);
        assert!((g - c(0.0, -0.4)).norm() < 1e-15);
        let g = cauchy(&Measure::semicircle(1.0).unwrap(), i);
        assert!((g - c(0.0, 0.5 * (1.0 - 5f64.sqrt()))).norm() < 1e-15);
    }

    #[test]
    fn f_transform_examples() {
        let i = UpperHalfPoint::new(0.0, 1.0).unwrap();
        let two_i = UpperHalfPoint::new(0.0, 2.0).unwrap();
        assert!((f_transform(&Measure::dirac(0.0), i) - c(0.0, 1.0)).norm() < 1e-15);
        assert!((f_transform(&Measure::bernoulli(), two_i) - c(0.0, 2.5)).norm() < 1e-14);
        assert!(f_transform(&Measure::semicircle(1.0).unwrap(), i).im >= 1.0);
    }

    #[test]
    fn scaled_semicircle_matches_dilation() {
        // G_{omega_c}(z) = G_omega(z / sqrt c) / sqrt c
        let z = c(0.3, 0.7);
        let direct = semicircle_cauchy(0.25, z);
        let via = semicircle_cauchy(1.0, z / 0.5) / 0.5;
        assert!((direct - via).norm() < 1e-15);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let h = 1e-6;
        let z = c(0.4, 0.3);
        for mu in [Measure::bernoulli(), Measure::semicircle(0.7).unwrap()] {
            let (_, d) = f_and_derivative(&mu, z);
            let fd = (f_and_derivative(&mu, z + h).0 - f_and_derivative(&mu, z - h).0) / (2.0 * h);
            assert!((d - fd).norm() < 1e-7, "{d} vs {fd}");
        }
    }

    #[test]
    fn analytic_continuation_agrees_in_upper_half_plane() {
        let mu = Measure::semicircle(2.0).unwrap();
        for z in [c(0.1, 0.2), c(-3.0, 0.01), c(5.0, 2.0)] {
            let a = cauchy_analytic(&mu, z).unwrap();
            let b = cauchy_c(&mu, z);
            assert!((a - b).norm() < 1e-13);
        }
        let g = cauchy_analytic(&mu, c(10.0, 0.0)).unwrap();
        assert!(g.im == 0.0 && g.re > 0.0 && g.re < 0.11);
        assert!(cauchy_analytic(&mu, c(1.0, 0.0)).is_err());
    }
}
