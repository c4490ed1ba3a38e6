//! Reduced runs checked against the growth constants recorded in
//! `fixtures/growth_constants.json` from full-size runs.

use opgrowth_core::fit::{fit_growth_constants, FitModel, FitWindow};
use opgrowth_core::ruc::run;
use opgrowth_core::{CircuitConfig, Geometry};
use serde_json::Value;

fn fixture() -> Value {
    let text = include_str!("../fixtures/growth_constants.json");
    serde_json::from_str(text).unwrap()
}

fn expected(v: &Value, geometry: &str, key: &str) -> f64 {
    v[geometry][key]["value"].as_f64().unwrap()
}

fn assert_close(name: &str, got: f64, want: f64, rel: f64) {
    assert!((got - want).abs() <= rel * want.abs(), "{name}: got {got}, recorded {want}");
}

#[test]
fn brickwork_constants_match_recorded_values() {
    let fx = fixture();
    let seed = fx["seed"].as_u64().unwrap();
    let cfg = CircuitConfig::new(120, Geometry::Brickwork1d, 0.0, 60, 2000, seed);
    let curve = run(&cfg).unwrap();
    let w = FitWindow::new(20.0, 60.0);
    let v = fit_growth_constants(&curve, FitModel::LinearBallistic, w, None).unwrap();
    let c = fit_growth_constants(&curve, FitModel::SqrtWidth, w, Some(v.value)).unwrap();
    assert_close("v_b", v.value, expected(&fx, "brickwork_1d", "v_b"), 0.01);
    assert_close("c", c.value, expected(&fx, "brickwork_1d", "c"), 0.05);
}

#[test]
fn all_to_all_constants_match_recorded_values() {
    let fx = fixture();
    let seed = fx["seed"].as_u64().unwrap();
    let mut cfg = CircuitConfig::new(1500, Geometry::AllToAll, 0.0, 8, 2000, seed);
    cfg.samples_per_unit_time = Some(4);
    let curve = run(&cfg).unwrap();
    let w = FitWindow::new(2.0, 8.0);
    let lambda = fit_growth_constants(&curve, FitModel::Exponential, w, None).unwrap();
    let b = fit_growth_constants(&curve, FitModel::RelativeWidth, w, None).unwrap();
    assert_close("lambda", lambda.value, expected(&fx, "all_to_all", "lambda"), 0.02);
    assert_close("b", b.value, expected(&fx, "all_to_all", "b"), 0.06);
}
