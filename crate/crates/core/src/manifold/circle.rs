//! Circle geometry on the angle representation in [−π, π).

use super::Flagged;
use std::f64::consts::PI;

/// Wraps an angle into [−π, π).
pub(crate) fn wrap(theta: f64) -> f64 {
    let w = (theta + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if w >= PI {
        -PI
    } else {
        w
    }
}

pub(crate) fn dist(a: f64, b: f64) -> f64 {
    wrap(b - a).abs()
}

/// Signed shortest arc from `a` to `b`. At the antipode both directions are
/// shortest; the positive one is returned, flagged.
pub(crate) fn log(a: f64, b: f64) -> Flagged<f64> {
    let d = wrap(b - a);
    if PI - d.abs() <= 1e-12 {
        Flagged::flagged(d.abs())
    } else {
        Flagged::unique(d)
    }
}
