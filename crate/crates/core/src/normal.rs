//! Univariate standard normal helpers.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{PI, SQRT_2};

/// Standard normal CDF.
pub fn cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-x / SQRT_2)
    }
}

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal quantile; `quantile(0) = -inf`, `quantile(1) = +inf`.
pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        let mut x = -SQRT_2 * erfc_inv(2.0 * p);
        // Newton polish on the lower tail for relative accuracy
        for _ in 0..2 {
            let (q, xs) = if x <= 0.0 { (p, x) } else { (1.0 - p, -x) };
            let step = (cdf(xs) - q) / pdf(xs);
            if !step.is_finite() {
                break;
            }
            x = if x <= 0.0 { xs - step } else { -(xs - step) };
        }
        x
    }
}
