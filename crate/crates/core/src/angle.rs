//! Angle normalization helpers.

use std::f64::consts::{PI, TAU};

/// Maps an angle to `[0, 2π)`.
pub fn wrap_tau(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Maps an angle to `[-π, π)`.
pub fn wrap_pi(x: f64) -> f64 {
    let r = wrap_tau(x + PI) - PI;
    if r >= PI {
        -PI
    } else {
        r
    }
}

/// Signed distance between two angles on the circle, in `[-π, π)`.
pub fn circle_diff(a: f64, b: f64) -> f64 {
    wrap_pi(a - b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrapping_ranges() {
        for &x in &[-7.0, -PI, -1e-18, 0.0, 1.0, PI, TAU, 20.0] {
            let t = wrap_tau(x);
            assert!((0.0..TAU).contains(&t), "{x} -> {t}");
            let p = wrap_pi(x);
            assert!((-PI..PI).contains(&p), "{x} -> {p}");
            assert!((t - x).rem_euclid(TAU).min(TAU - (t - x).rem_euclid(TAU)) < 1e-12);
        }
        assert_eq!(wrap_pi(PI), -PI);
        assert!((circle_diff(0.1, TAU - 0.1) - 0.2).abs() < 1e-15);
    }
}
