use freeconv_web::{convolve_json, support_json, weighted_sum_json};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn two_bernoullis_give_the_arcsine_density() {
    let v = parse(convolve_json("bernoulli, bernoulli", 801, 1e-3).unwrap());
    let xs = v["x"].as_array().unwrap();
    let ds = v["density"].as_array().unwrap();
    assert_eq!(xs.len(), 801);
    for (x, d) in xs.iter().zip(ds) {
        let (x, d) = (x.as_f64().unwrap(), d.as_f64().unwrap());
        if x.abs() < 1.5 {
            let exact = 1.0 / (std::f64::consts::PI * (4.0 - x * x).sqrt());
            assert!((d - exact).abs() < 5e-3, "x={x}");
        }
    }
}

#[test]
fn weighted_sum_reports_distance_and_weights() {
    let v = parse(weighted_sum_json("bernoulli", 16, true, 3, 2001, 1e-3).unwrap());
    let theta = v["theta"].as_array().unwrap();
    assert_eq!(theta.len(), 16);
    let k = v["kolmogorov"].as_f64().unwrap();
    assert!(k > 0.0 && k < 0.1, "{k}");
    assert_eq!(v["semicircle"].as_array().unwrap().len(), 2001);
}

#[test]
fn support_matches_the_enclosure_formula() {
    let v = parse(support_json("bernoulli", 1024, false, 0).unwrap());
    assert_eq!(v["r_theta"].as_f64().unwrap(), 0.375);
    assert_eq!(v["contained_kargin"], true);
}

#[test]
fn bad_inputs_are_messages() {
    assert!(convolve_json("", 101, 1e-3).unwrap_err().contains("at least one"));
    assert!(weighted_sum_json("bernoulli", 0, false, 0, 101, 1e-3).is_err());
    assert!(support_json("dirac:1", 4, false, 0).is_err());
}
