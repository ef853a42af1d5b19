//! Central finite-difference oracle shared by the layer tests.

use rand::Rng as _;
use std::vec::Vec;

use crate::rng;

pub const FD_STEP: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, floor)`: relative error with an absolute floor so
/// that exactly-zero gradients (dead ReLUs) compare cleanly.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// `f(i, h)` evaluates the loss with coordinate `i` shifted by `h`.
pub fn assert_gradients_match(analytic: &[f64], n: usize, tol: f64, f: impl Fn(usize, f64) -> f64) {
    assert_eq!(analytic.len(), n);
    for (i, &a) in analytic.iter().enumerate() {
        let numeric = (f(i, FD_STEP) - f(i, -FD_STEP)) / (2.0 * FD_STEP);
        let err = relative_error(a, numeric, 1e-5);
        assert!(err < tol, "coordinate {i}: analytic {a} vs numeric {numeric} (rel err {err})");
    }
}

pub fn uniform(rng: &mut rng::Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

pub fn random_vec(rng: &mut rng::Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| uniform(rng, -1.0, 1.0)).collect()
}
