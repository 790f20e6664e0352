//! Standard normal tail probabilities and quantiles.

use libm::erfc;

/// `1 − Φ(z)`.
pub fn normal_sf(z: f64) -> f64 {
    // erfc is evaluated on the non-negative half so that the right tail keeps
    // full relative accuracy; the left tail follows by complement.
    if z >= 0.0 {
        0.5 * erfc(z / std::f64::consts::SQRT_2)
    } else {
        1.0 - 0.5 * erfc(-z / std::f64::consts::SQRT_2)
    }
}

/// `Φ(z)`.
pub fn normal_cdf(z: f64) -> f64 {
    normal_sf(-z)
}

/// Upper `α` quantile `z_α` with `normal_sf(z_α) = α`, by bisection.
pub fn z_alpha(alpha: f64) -> f64 {
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if normal_sf(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
