//! Predictions, gradients and the blending pipeline against naive
//! reference implementations.

use blendrec_testkit::checks;

#[test]
fn recommender_predictions_match_reference_formulas() {
    let summary = checks::formula_oracles(0..100).unwrap_or_else(|e| panic!("{e}"));
    assert!(summary.comparisons > 10_000, "{}", summary.comparisons);
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let worst = checks::gradient_checks().unwrap_or_else(|e| panic!("{e}"));
    assert!(worst < checks::GRADIENT_TOLERANCE);
}

#[test]
fn single_bin_linear_blender_is_plain_ridge() {
    let (diff, resid) = checks::binned_lr_degeneracy(0..10).unwrap_or_else(|e| panic!("{e}"));
    assert!(diff <= checks::RIDGE_TOLERANCE && resid <= checks::NORMAL_EQUATION_TOLERANCE);
}

#[test]
fn one_candidate_nested_cv_is_plain_cv() {
    checks::single_candidate_equals_plain_cv().unwrap_or_else(|e| panic!("{e}"));
}

#[test]
fn nested_cv_mean_is_exact() {
    checks::mean_is_exact().unwrap_or_else(|e| panic!("{e}"));
}

#[test]
fn trainer_layer_does_not_leak() {
    checks::trainer_no_leakage(0..8).unwrap_or_else(|e| panic!("{e}"));
}

#[test]
fn tester_layer_does_not_leak() {
    checks::tester_no_leakage().unwrap_or_else(|e| panic!("{e}"));
}
