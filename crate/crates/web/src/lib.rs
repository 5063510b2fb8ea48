//! WebAssembly bindings for the browser demo. Every export takes plain
//! numbers and strings and returns a JSON document, so the page needs no glue
//! beyond `JSON.parse`.

use freeconv::experiments::{support_experiment, SupportOptions};
use freeconv::inversion::{self, FreeSumTransform};
use freeconv::sphere::{self, WeightVector};
use freeconv::subordination::{FreeSum, SolveOptions};
use freeconv::Measure;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Grids are capped so a slider cannot freeze the tab.
const MAX_POINTS: usize = 20_001;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn parse_measures(list: &str) -> Result<Vec<Measure>, String> {
    let measures: Vec<Measure> = list
        .split([',', ';', '\n'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<Measure>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    if measures.is_empty() {
        return Err("enter at least one measure".into());
    }
    Ok(measures)
}

fn weights(n: usize, random: bool, seed: u64) -> Result<WeightVector, String> {
    match n {
        0 => Err("n must be positive".into()),
        _ if random => Ok(sphere::sample(n, seed)),
        _ => Ok(WeightVector::uniform(n)),
    }
}

fn check_grid(points: usize, eta: f64) -> Result<(), String> {
    if !(3..=MAX_POINTS).contains(&points) {
        return Err(format!("points must lie in 3..={MAX_POINTS}"));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err("eta must lie in (0, 1)".into());
    }
    Ok(())
}

#[derive(Serialize)]
struct Density {
    x: Vec<f64>,
    density: Vec<f64>,
    cdf: Vec<f64>,
    semicircle: Vec<f64>,
    tail_mass: f64,
}

#[derive(Serialize)]
struct WeightedDensity {
    #[serde(flatten)]
    density: Density,
    kolmogorov: f64,
    kolmogorov_error: f64,
    theta: Vec<f64>,
}

fn density_of(sum: FreeSum, points: usize, eta: f64) -> Result<(Density, inversion::GriddedDistribution, inversion::GriddedDistribution), String> {
    let (lo, hi) = inversion::window(sum.support_bound().max(2.0), 0.5);
    let transform = FreeSumTransform::new(sum, SolveOptions::default());
    let target = inversion::recover(&transform, lo, hi, points, eta).map_err(|e| e.to_string())?;
    let reference = inversion::recover(&Measure::semicircle(1.0).map_err(|e| e.to_string())?, lo, hi, points, eta)
        .map_err(|e| e.to_string())?;
    let d = Density {
        x: target.grid.clone(),
        density: target.density.clone(),
        cdf: target.cdf.clone(),
        semicircle: reference.density.clone(),
        tail_mass: target.tail_mass,
    };
    Ok((d, target, reference))
}

/// Density of the free convolution of a comma-separated list of presets,
/// for example `bernoulli, binomial:0.3, semicircle:0.5`.
pub fn convolve_json(list: &str, points: usize, eta: f64) -> Result<String, String> {
    check_grid(points, eta)?;
    let sum = FreeSum::new(&parse_measures(list)?).map_err(|e| e.to_string())?;
    let (d, _, _) = density_of(sum, points, eta)?;
    serde_json::to_string(&d).map_err(|e| e.to_string())
}

/// Density of the weighted sum of `n` free copies of `preset` and its
/// Kolmogorov distance to the semicircle law.
pub fn weighted_sum_json(preset: &str, n: usize, random: bool, seed: u64, points: usize, eta: f64) -> Result<String, String> {
    check_grid(points, eta)?;
    let mu: Measure = preset.trim().parse().map_err(|e: freeconv::Error| e.to_string())?;
    let mu = mu.standardize().map_err(|e| e.to_string())?;
    let theta = weights(n, random, seed)?;
    let sum = FreeSum::weighted(&mu, &theta).map_err(|e| e.to_string())?;
    let (density, target, reference) = density_of(sum, points, eta)?;
    let k = inversion::kolmogorov(&target, &reference);
    let out = WeightedDensity { density, kolmogorov: k.value, kolmogorov_error: k.error, theta: theta.as_slice().to_vec() };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Detected support of a weighted sum next to its enclosure bounds.
pub fn support_json(preset: &str, n: usize, random: bool, seed: u64) -> Result<String, String> {
    let mu: Measure = preset.trim().parse().map_err(|e: freeconv::Error| e.to_string())?;
    let mu = mu.standardize().map_err(|e| e.to_string())?;
    let theta = weights(n, random, seed)?;
    let opts = SupportOptions { points: 8001, eta: 1e-4, ..SupportOptions::default() };
    let report = support_experiment(&mu, &theta, &SolveOptions::default(), &opts).map_err(|e| e.to_string())?;
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = convolve)]
pub fn convolve_js(list: &str, points: usize, eta: f64) -> Result<String, JsError> {
    convolve_json(list, points, eta).map_err(js_err)
}

#[wasm_bindgen(js_name = weightedSum)]
pub fn weighted_sum_js(preset: &str, n: usize, random: bool, seed: u32, points: usize, eta: f64) -> Result<String, JsError> {
    weighted_sum_json(preset, n, random, seed as u64, points, eta).map_err(js_err)
}

#[wasm_bindgen(js_name = support)]
pub fn support_js(preset: &str, n: usize, random: bool, seed: u32) -> Result<String, JsError> {
    support_json(preset, n, random, seed as u64).map_err(js_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measure_lists() {
        assert_eq!(parse_measures("bernoulli, semicircle:0.5\n").unwrap().len(), 2);
        assert!(parse_measures(" , ").is_err());
        assert!(parse_measures("bernoulli, what").is_err());
    }

    #[test]
    fn grid_limits() {
        assert!(check_grid(2, 0.01).is_err());
        assert!(check_grid(MAX_POINTS + 1, 0.01).is_err());
        assert!(check_grid(101, 0.0).is_err());
        assert!(check_grid(101, 0.01).is_ok());
    }
}
