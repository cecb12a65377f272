//! Closed-form proximal maps of geodesic-distance penalties. All of them
//! reduce to a single scalar unknown because the minimizer stays on the
//! geodesic between the inputs, so a prox is always "move a fraction t along
//! a geodesic".

use crate::error::{MvrError, Result};
use crate::manifold::{Manifold, ManifoldPoint};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProxVariant {
    /// Pure power penalty d^q / q.
    Power,
    /// Huber-smoothed penalty h(d) with h(s) = ω s²/(2τ) for s ≤ τ and
    /// h(s) = ω s − ωτ/2 beyond.
    Huber { omega: f64, tau: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProxParams {
    /// Proximal step size λ.
    pub lambda: f64,
    /// Coupling weight α of the pairwise penalties.
    pub alpha: f64,
    /// Power exponent q ≥ 1; q ∈ {1, 2} takes the closed form, anything else
    /// is solved by a safeguarded Newton iteration on the geodesic parameter.
    pub q: f64,
    pub variant: ProxVariant,
}

impl Default for ProxParams {
    fn default() -> Self {
        ProxParams { lambda: 1.0, alpha: 1.0, q: 1.0, variant: ProxVariant::Power }
    }
}

impl ProxParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(MvrError::InvalidArgument(format!(
                "prox step must be nonnegative, got {}",
                self.lambda
            )));
        }
        if !(self.alpha >= 0.0) {
            return Err(MvrError::InvalidArgument(format!(
                "coupling weight must be nonnegative, got {}",
                self.alpha
            )));
        }
        if !(self.q >= 1.0) {
            return Err(MvrError::InvalidArgument(format!(
                "power exponent must be at least 1, got {}",
                self.q
            )));
        }
        if let ProxVariant::Huber { omega, tau } = self.variant {
            if !(omega > 0.0) || !(tau > 0.0) {
                return Err(MvrError::InvalidArgument(
                    "huber parameters must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Fraction of the way from x toward f taken by the prox of the data
/// penalty, given the separation d.
///
/// Power q = 2: minimize s²/(2λ) + ½(d−s)², giving s = λd/(1+λ).
/// Power q = 1: minimize s²/(2λ) + (d−s), giving s = λ capped at d.
/// Huber: minimize s²/(2λ) + h(d−s). On the quadratic branch (d−s ≤ τ) the
/// optimality condition s/λ = ω(d−s)/τ gives s = ωλd/(τ+ωλ), valid exactly
/// when d ≤ τ+ωλ. On the linear branch s/λ = ω gives s = ωλ, valid when
/// d > τ+ωλ. At d = τ+ωλ both branches give s = ωλ, so the map is
/// continuous.
fn data_fraction(d: f64, lambda: f64, q: f64, variant: ProxVariant) -> f64 {
    if d <= 1e-300 || lambda == 0.0 {
        return 0.0;
    }
    match variant {
        ProxVariant::Huber { omega, tau } => {
            if d <= tau + omega * lambda {
                omega * lambda / (tau + omega * lambda)
            } else {
                (omega * lambda / d).min(1.0)
            }
        }
        ProxVariant::Power => {
            if q == 2.0 {
                lambda / (1.0 + lambda)
            } else if q == 1.0 {
                (lambda / d).min(1.0)
            } else {
                // ψ(s) = s²/(2λ) + (d−s)^q/q is strictly convex for q > 1.
                newton_fraction(d, 0.5 / lambda, 1.0, 1.0, q) / d
            }
        }
    }
}

/// Retraction fraction for the symmetric pair penalty with separation d.
/// Both endpoints move inward by s = t·d along the connecting geodesic.
///
/// Power q = 1 (penalty α·d): minimize s²/λ + α(d−2s), giving s = λα capped
/// at d/2.
/// Power q = 2 (penalty (α/2)·d²): minimize s²/λ + (α/2)(d−2s)², giving
/// s(1+2λα) = λαd.
/// Huber (penalty α·h(d)): on the quadratic branch the condition
/// 2s/λ = 2αω(d−2s)/τ gives s = αωλd/(τ+2αωλ), valid when d ≤ τ+2αωλ; on
/// the linear branch 2s/λ = 2αω gives s = αωλ, capped at d/2. At
/// d = τ+2αωλ both give s = αωλ, so again continuous.
fn pair_fraction(d: f64, lambda_alpha: f64, lambda: f64, q: f64, variant: ProxVariant) -> f64 {
    if d <= 1e-300 || lambda_alpha == 0.0 {
        return 0.0;
    }
    match variant {
        ProxVariant::Huber { omega, tau } => {
            if d <= tau + 2.0 * lambda_alpha * omega {
                lambda_alpha * omega / (tau + 2.0 * lambda_alpha * omega)
            } else {
                (lambda_alpha * omega / d).min(0.5)
            }
        }
        ProxVariant::Power => {
            if q == 1.0 {
                (lambda_alpha / d).min(0.5)
            } else if q == 2.0 {
                lambda_alpha / (1.0 + 2.0 * lambda_alpha)
            } else {
                let alpha = lambda_alpha / lambda;
                newton_fraction(d, 1.0 / lambda, 2.0, alpha, q) / d
            }
        }
    }
}

/// Minimizes ψ(s) = a·s² + (w/q)(d−cs)^q over s ∈ [0, d/c] by Newton with a
/// bisection safeguard; ψ' is monotone for q > 1 so the root is unique.
fn newton_fraction(d: f64, a: f64, c: f64, w: f64, q: f64) -> f64 {
    let dpsi = |s: f64| 2.0 * a * s - c * w * (d - c * s).max(0.0).powf(q - 1.0);
    let (mut lo, mut hi) = (0.0_f64, d / c);
    let mut s = hi * 0.5;
    for _ in 0..100 {
        let g = dpsi(s);
        if g.abs() <= 1e-15 * (1.0 + a * d) {
            break;
        }
        if g > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let curv = 2.0 * a + c * c * w * (q - 1.0) * (d - c * s).max(1e-300).powf(q - 2.0);
        let newton = s - g / curv;
        s = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= 1e-15 * d {
            break;
        }
    }
    s
}

/// Prox of the data-fidelity penalty d(·, f)^q/q (or its Huber version) with
/// step λ: pulls x toward f along the connecting geodesic.
pub fn prox_data(m: &Manifold, x: &[f64], f: &[f64], params: &ProxParams) -> Result<Vec<f64>> {
    params.validate()?;
    let d = m.dist(x, f);
    let t = data_fraction(d, params.lambda, params.q, params.variant);
    Ok(if t == 0.0 { x.to_vec() } else { m.geopoint(x, f, t).value })
}

/// Prox of the symmetric coupling penalty α·d(·,·)^q/q (or its Huber
/// version) with step λ: both points move toward each other by the same
/// fraction, so the output pair is ([x₁,x₂]_t, [x₂,x₁]_t).
pub fn prox_pair(
    m: &Manifold,
    x1: &[f64],
    x2: &[f64],
    params: &ProxParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    params.validate()?;
    let d = m.dist(x1, x2);
    let t = pair_fraction(d, params.lambda * params.alpha, params.lambda, params.q, params.variant);
    if t == 0.0 {
        return Ok((x1.to_vec(), x2.to_vec()));
    }
    Ok((m.geopoint(x1, x2, t).value, m.geopoint(x2, x1, t).value))
}

/// Prox of the quadratic coupling penalty (α/2)·d(·,·)² with step λ;
/// equivalent to [`prox_pair`] with q = 2 and kept as its own entry point
/// because second-difference schemes call it directly.
pub fn prox_pair_quadratic(
    m: &Manifold,
    x1: &[f64],
    x2: &[f64],
    params: &ProxParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    params.validate()?;
    let d = m.dist(x1, x2);
    let la = params.lambda * params.alpha;
    let t = la / (1.0 + 2.0 * la);
    if t == 0.0 || d <= 1e-300 {
        return Ok((x1.to_vec(), x2.to_vec()));
    }
    Ok((m.geopoint(x1, x2, t).value, m.geopoint(x2, x1, t).value))
}

/// Point-level wrapper around [`prox_data`] with manifold checking.
pub fn prox_data_point(
    x: &ManifoldPoint,
    f: &ManifoldPoint,
    params: &ProxParams,
) -> Result<ManifoldPoint> {
    if x.manifold != f.manifold {
        return Err(MvrError::ManifoldMismatch {
            left: x.manifold.name(),
            right: f.manifold.name(),
        });
    }
    let c = prox_data(&x.manifold, &x.coords, &f.coords, params)?;
    Ok(ManifoldPoint::new_unchecked(x.manifold.clone(), c))
}

/// Point-level wrapper around [`prox_pair`] with manifold checking.
pub fn prox_pair_points(
    x1: &ManifoldPoint,
    x2: &ManifoldPoint,
    params: &ProxParams,
) -> Result<(ManifoldPoint, ManifoldPoint)> {
    if x1.manifold != x2.manifold {
        return Err(MvrError::ManifoldMismatch {
            left: x1.manifold.name(),
            right: x2.manifold.name(),
        });
    }
    let (a, b) = prox_pair(&x1.manifold, &x1.coords, &x2.coords, params)?;
    let m = x1.manifold.clone();
    Ok((
        ManifoldPoint::new_unchecked(m.clone(), a),
        ManifoldPoint::new_unchecked(m, b),
    ))
}

/// Evaluates the penalty the data prox is the proximal map of.
pub fn data_penalty(d: f64, q: f64, variant: ProxVariant) -> f64 {
    match variant {
        ProxVariant::Power => d.powf(q) / q,
        ProxVariant::Huber { omega, tau } => huber(d, omega, tau),
    }
}

/// Huber function: quadratic ω s²/(2τ) up to s = τ, linear ω s − ωτ/2 past
/// it (the pieces meet with matching value and slope at τ).
pub fn huber(s: f64, omega: f64, tau: f64) -> f64 {
    if s <= tau {
        omega * s * s / (2.0 * tau)
    } else {
        omega * s - omega * tau / 2.0
    }
}
