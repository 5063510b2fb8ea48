//! Numerical free probability: free additive convolution through the
//! subordination system, Stieltjes–Perron inversion, distances to the
//! semicircle law and the rate/support diagnostics built on them.

pub mod complexfn;
pub mod cumulants;
pub mod error;
pub mod experiments;
pub mod inversion;
pub mod measures;
pub mod output;
pub mod sphere;
pub mod subordination;

pub use complexfn::{cauchy, f_transform, sqrt_cut, UpperHalfPoint};
pub use error::{Error, Result};
pub use measures::Measure;
pub use num_complex::Complex64;
