//! Measure and distribution inputs: presets, JSON files and free sums.

use std::path::{Path, PathBuf};

use freeconv::inversion::{AnalyticLaw, Cdf, FreeSumTransform, Transform};
use freeconv::sphere::WeightVector;
use freeconv::subordination::{FreeSum, SolveOptions};
use freeconv::Measure;
use serde_json::Value;

use crate::CliError;

fn looks_like_file(spec: &str) -> bool {
    spec.ends_with(".json") || Path::new(spec).is_file()
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Accepts either a measure object or a preset string.
fn measure_from_value(value: &Value) -> Result<Measure, CliError> {
    match value {
        Value::String(s) => s.parse::<Measure>().map_err(|e| CliError::Usage(e.to_string())),
        other => serde_json::from_value(other.clone()).map_err(|e| CliError::Usage(format!("measure: {e}"))),
    }
}

/// Collects `--preset` and `--measure` inputs, presets first.
pub fn collect_measures(presets: &[String], files: &[PathBuf]) -> Result<Vec<Measure>, CliError> {
    let mut out = Vec::with_capacity(presets.len() + files.len());
    for p in presets {
        out.push(p.parse::<Measure>().map_err(|e| CliError::Usage(e.to_string()))?);
    }
    for f in files {
        out.push(measure_from_value(&read_json(f)?)?);
    }
    Ok(out)
}

/// Exactly one input measure.
pub fn single_measure(presets: &[String], files: &[PathBuf]) -> Result<Measure, CliError> {
    let mut all = collect_measures(presets, files)?;
    match all.len() {
        1 => Ok(all.pop().expect("one element")),
        0 => Err(CliError::Usage("no input measure given (use --preset or --measure)".into())),
        k => Err(CliError::Usage(format!("expected one input measure, got {k}"))),
    }
}

/// Rejects measures that are not centred with unit variance.
pub fn require_standardized(mu: &Measure) -> Result<(), CliError> {
    let (mean, var) = (mu.mean(), mu.variance());
    if mean.abs() > 1e-9 || (var - 1.0).abs() > 1e-9 {
        return Err(CliError::Usage(format!(
            "measure must be standardized (mean {mean}, variance {var}); pass --standardize"
        )));
    }
    Ok(())
}

/// Either side of a distance computation.
#[derive(Debug)]
pub enum Distribution {
    Law(AnalyticLaw),
    Sum(FreeSum),
}

impl Distribution {
    /// Named laws (`arcsine`, presets) or a JSON file with a `kind` of
    /// `atomic`, `semicircle`, `arcsine`, `free_sum` or `weighted_sum`.
    pub fn parse(spec: &str) -> Result<Self, CliError> {
        if looks_like_file(spec) {
            return Self::from_value(&read_json(Path::new(spec))?);
        }
        if spec == "arcsine" {
            return Ok(Distribution::Law(AnalyticLaw::arcsine()));
        }
        let mu = spec.parse::<Measure>().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(Distribution::Law(AnalyticLaw::Measure(mu)))
    }

    fn from_value(value: &Value) -> Result<Self, CliError> {
        let kind = value.get("kind").and_then(Value::as_str).unwrap_or("");
        match kind {
            "arcsine" => {
                let radius = value.get("radius").and_then(Value::as_f64).unwrap_or(2.0);
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(CliError::Usage(format!("arcsine radius must be positive, got {radius}")));
                }
                Ok(Distribution::Law(AnalyticLaw::Arcsine { radius }))
            }
            "free_sum" => {
                let items = value
                    .get("measures")
                    .and_then(Value::as_array)
                    .ok_or_else(|| CliError::Usage("free_sum needs a `measures` array".into()))?;
                let measures = items.iter().map(measure_from_value).collect::<Result<Vec<_>, _>>()?;
                Ok(Distribution::Sum(FreeSum::new(&measures).map_err(CliError::from)?))
            }
            "weighted_sum" => {
                let mu = measure_from_value(
                    value.get("measure").ok_or_else(|| CliError::Usage("weighted_sum needs `measure`".into()))?,
                )?;
                let theta: WeightVector = serde_json::from_value(
                    value.get("theta").cloned().ok_or_else(|| CliError::Usage("weighted_sum needs `theta`".into()))?,
                )
                .map_err(|e| CliError::Usage(format!("theta: {e}")))?;
                Ok(Distribution::Sum(FreeSum::weighted(&mu, &theta).map_err(CliError::from)?))
            }
            _ => Ok(Distribution::Law(AnalyticLaw::Measure(measure_from_value(value)?))),
        }
    }

    pub fn support_bound(&self) -> f64 {
        match self {
            Distribution::Law(AnalyticLaw::Measure(m)) => m.support_radius(),
            Distribution::Law(AnalyticLaw::Arcsine { radius }) => *radius,
            Distribution::Sum(s) => s.support_bound(),
        }
    }

    pub fn needs_inversion(&self) -> bool {
        matches!(self, Distribution::Sum(_))
    }

    pub fn transform(&self, solver: SolveOptions) -> Box<dyn Transform + '_> {
        match self {
            Distribution::Law(law) => Box::new(law.clone()),
            Distribution::Sum(s) => Box::new(FreeSumTransform::new(s.clone(), solver)),
        }
    }

    pub fn law(&self) -> Option<&dyn Cdf> {
        match self {
            Distribution::Law(law) => Some(law),
            Distribution::Sum(_) => None,
        }
    }
}
