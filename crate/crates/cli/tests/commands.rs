use std::path::Path;

use freeconv_cli::{run, EXIT_IO, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE};
use serde_json::Value;

fn freeconv(args: &[&str]) -> i32 {
    run(std::iter::once("freeconv").chain(args.iter().copied()))
}

fn out_arg(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn json(path: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Data lines of a CSV output, comments dropped.
fn csv_rows(path: &str) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect())
        .collect()
}

#[test]
fn convolve_two_bernoullis_gives_the_arcsine_density() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path(), "arcsine.csv");
    let code = freeconv(&["convolve", "--preset", "bernoulli", "--preset", "bernoulli", "--density", "--eta", "1e-3", "-o", &out]);
    assert_eq!(code, EXIT_OK);
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 4001);
    for r in rows.iter().filter(|r| r[0].abs() < 1.5) {
        let exact = 1.0 / (std::f64::consts::PI * (4.0 - r[0] * r[0]).sqrt());
        assert!((r[1] - exact).abs() < 5e-3, "{r:?}");
    }
}

#[test]
fn convolve_half_semicircles_gives_the_unit_semicircle() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path(), "sc.csv");
    let code = freeconv(&["convolve", "--preset", "semicircle:0.5", "--preset", "semicircle:0.5", "-o", &out]);
    assert_eq!(code, EXIT_OK);
    for r in csv_rows(&out).iter().filter(|r| r[0].abs() < 1.5) {
        let exact = (4.0 - r[0] * r[0]).sqrt() / (2.0 * std::f64::consts::PI);
        assert!((r[1] - exact).abs() < 3e-3, "{r:?}");
    }
}

#[test]
fn convolve_transform_samples() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path(), "g.json");
    let code = freeconv(&[
        "convolve", "--preset", "dirac:0.5", "--transform", "--points", "11", "--eta", "0.1", "--format", "json", "-o", &out,
    ]);
    assert_eq!(code, EXIT_OK);
    let doc = json(&out);
    assert_eq!(doc["config"]["output"], "transform");
    let x = doc["result"]["x"][3].as_f64().unwrap();
    let g = &doc["result"]["g"][3];
    let expected = num_g(x - 0.5, 0.1);
    assert!((g[0].as_f64().unwrap() - expected.0).abs() < 1e-12);
    assert!((g[1].as_f64().unwrap() - expected.1).abs() < 1e-12);
}

/// `1/(x + i y)`.
fn num_g(x: f64, y: f64) -> (f64, f64) {
    let d = x * x + y * y;
    (x / d, -y / d)
}

#[test]
fn missing_or_bad_input_is_a_usage_error() {
    assert_eq!(freeconv(&["convolve"]), EXIT_USAGE);
    assert_eq!(freeconv(&["convolve", "--preset", "nonsense"]), EXIT_USAGE);
    assert_eq!(freeconv(&["convolve", "--preset", "bernoulli", "--eta", "-1"]), EXIT_USAGE);
    assert_eq!(freeconv(&["rates", "--preset", "bernoulli", "--n", "8,4"]), EXIT_USAGE);
    assert_eq!(freeconv(&["rates", "--preset", "dirac:1", "--n", "4,8"]), EXIT_USAGE);
    assert_eq!(freeconv(&["support", "--preset", "bernoulli", "--n", "4", "--format", "csv"]), EXIT_USAGE);
    assert_eq!(freeconv(&["no-such-command"]), EXIT_USAGE);
    assert_eq!(freeconv(&["--help"]), EXIT_OK);
}

#[test]
fn unwritable_output_is_an_io_error_and_leaves_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent").join("x.csv");
    let code = freeconv(&["convolve", "--preset", "bernoulli", "-o", &missing.display().to_string()]);
    assert_eq!(code, EXIT_IO);
    assert_eq!(freeconv(&["distance", "--a", &out_arg(dir.path(), "absent.json"), "--b", "semicircle"]), EXIT_IO);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn solver_failure_is_a_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path(), "x.csv");
    let code = freeconv(&[
        "convolve", "--preset", "bernoulli", "--preset", "binomial:0.2", "--transform", "--eta", "1e-6", "--max-iters", "1",
        "--method", "fixed-point", "-o", &out,
    ]);
    assert_eq!(code, EXIT_NUMERICAL);
    assert!(!Path::new(&out).exists());
}

#[test]
fn distance_arcsine_file_against_semicircle() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("arcsine.json");
    std::fs::write(&spec, r#"{"kind": "arcsine"}"#).unwrap();
    let out = out_arg(dir.path(), "d.json");
    let code = freeconv(&["distance", "--a", &spec.display().to_string(), "--b", "semicircle", "--metric", "kolmogorov", "-o", &out]);
    assert_eq!(code, EXIT_OK);
    let v = json(&out)["result"]["value"].as_f64().unwrap();
    assert!((v - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-4);
}

#[test]
fn distance_of_a_free_sum_file_is_smoothed_on_both_sides() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("sum.json");
    std::fs::write(&spec, r#"{"kind": "free_sum", "measures": ["semicircle:0.5", "semicircle:0.5"]}"#).unwrap();
    let out = out_arg(dir.path(), "d.json");
    let code = freeconv(&["distance", "--a", &spec.display().to_string(), "--b", "semicircle", "-o", &out]);
    assert_eq!(code, EXIT_OK);
    let doc = json(&out);
    assert_eq!(doc["result"]["smoothed"], true);
    assert!(doc["result"]["value"].as_f64().unwrap() < 1e-8);
}

#[test]
fn rates_csv_has_header_fit_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path(), "r.csv");
    let code = freeconv(&[
        "rates", "--preset", "bernoulli", "--n", "4,8,16,32,64", "--weights", "uniform", "--metric", "delta", "--no-timestamp", "-o", &out,
    ]);
    assert_eq!(code, EXIT_OK);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# command=rates\n# config={"));
    assert!(!text.contains("generated_at"));
    assert!(text.contains("# fit metric=delta slope="));
    assert!(text.contains("\nn,rep,seed,weight_mode,delta,delta_err,delta_eps,delta_tilde,levy,slope_running\n"));
    let rows = text.lines().filter(|l| !l.starts_with('#')).skip(1).count();
    assert_eq!(rows, 5);
}

#[test]
fn support_reports_the_enclosures() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path(), "s.json");
    assert_eq!(freeconv(&["support", "--preset", "bernoulli", "--n", "1024", "--weights", "uniform", "-o", &out]), EXIT_OK);
    let doc = json(&out);
    assert_eq!(doc["result"]["r_theta"].as_f64().unwrap(), 0.375);
    assert_eq!(doc["result"]["kargin_interval"][1].as_f64().unwrap(), 2.15625);
    assert_eq!(doc["config"]["weights"]["seed"], 0);
    assert!(doc["generated_at"].is_u64());

    let out = out_arg(dir.path(), "s100.json");
    assert_eq!(freeconv(&["support", "--preset", "bernoulli", "--n", "100", "-o", &out]), EXIT_OK);
    let doc = json(&out);
    assert_eq!(doc["result"]["preconditions_met"], false);
    assert!(doc["result"]["contained_paper"].is_null());
}

#[test]
fn residuals_csv_lists_grid_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path(), "res.csv");
    let code = freeconv(&[
        "residuals", "--preset", "bernoulli", "--n", "4", "--weights", "random", "--seed", "3", "--grid-re", "4", "--grid-im", "3",
        "--line-points", "5", "--format", "csv", "-o", &out,
    ]);
    assert_eq!(code, EXIT_OK);
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(lines.len(), 1 + 12 + 5);
    assert_eq!(lines[1..].iter().filter(|l| l.split(',').nth(2) == Some("true")).count(), 5);
}

#[test]
fn sphere_and_concentration_are_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let a = out_arg(dir.path(), "a.json");
    let b = out_arg(dir.path(), "b.json");
    for out in [&a, &b] {
        assert_eq!(freeconv(&["sphere", "--n", "5", "--seed", "9", "--count", "3", "--no-timestamp", "-o", out]), EXIT_OK);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let doc = json(&a);
    let theta: Vec<f64> = doc["result"][2]["theta"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!((theta.iter().map(|t| t * t).sum::<f64>() - 1.0).abs() < 1e-12);

    let c = out_arg(dir.path(), "c.json");
    assert_eq!(freeconv(&["concentration", "--n", "16", "--samples", "2000", "--seed", "1", "-o", &c]), EXIT_OK);
    assert_eq!(json(&c)["result"]["samples"], 2000);
}

#[test]
fn nonid_repeats_the_input_list() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path(), "n.json");
    assert_eq!(freeconv(&["nonid", "--preset", "bernoulli", "--repeat", "16", "-o", &out]), EXIT_OK);
    let doc = json(&out);
    assert_eq!(doc["result"]["count"], 16);
    assert!((doc["result"]["l_n"].as_f64().unwrap() - 0.25).abs() < 1e-12);
    assert_eq!(freeconv(&["nonid", "--preset", "dirac:0", "-o", &out]), EXIT_USAGE);
}
