//! Finite-difference checks of every hand-written gradient.

mod support;

use support::gradcheck::{affine_errors, decoder_errors, noisy_tanh_errors, unroll_errors, walkback_errors};

fn assert_below(errs: &[f64], tol: f64) {
    assert_eq!(errs.len(), 100);
    for (trial, e) in errs.iter().enumerate() {
        assert!(*e < tol, "trial {trial}: {e}");
    }
}

#[test]
fn noisy_tanh_gradient() {
    assert_below(&noisy_tanh_errors(100, 1), 1e-6);
}

#[test]
fn affine_gradient() {
    assert_below(&affine_errors(100, 2), 1e-5);
}

#[test]
fn decoder_weight_gradient() {
    assert_below(&decoder_errors(100, 3), 1e-5);
}

#[test]
fn full_unroll_gradient_with_frozen_noise() {
    assert_below(&unroll_errors(100, 4), 1e-4);
}

#[test]
fn walkback_unroll_gradient_last_step_only() {
    assert_below(&walkback_errors(100, 5), 1e-5);
}
