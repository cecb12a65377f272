//! Quality metrics for denoising and reconstruction experiments.

use crate::error::{MvrError, Result};
use crate::signal::Signal;

/// Signal-to-noise gain in decibels:
/// 10 log₁₀(Σᵢ d(hᵢ, fᵢ)² / Σᵢ d(hᵢ, uᵢ)²) for ground truth h, corrupted
/// input f and estimate u. A perfect estimate (u = h) reports +∞.
pub fn delta_snr(ground: &Signal, noisy: &Signal, estimate: &Signal) -> Result<f64> {
    for other in [noisy, estimate] {
        if ground.manifold != other.manifold {
            return Err(MvrError::ManifoldMismatch {
                left: ground.manifold.name(),
                right: other.manifold.name(),
            });
        }
        if ground.shape != other.shape {
            return Err(MvrError::InvalidArgument(
                "signal-to-noise gain needs signals of identical shape".into(),
            ));
        }
    }
    let m = &ground.manifold;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..ground.len() {
        num += m.dist(ground.point(i), noisy.point(i)).powi(2);
        den += m.dist(ground.point(i), estimate.point(i)).powi(2);
    }
    if den == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (num / den).log10())
}
