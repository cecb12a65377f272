//! Intrinsic statistics of weighted point samples: Karcher mean by intrinsic
//! gradient descent, geodesic median by subgradient descent, and a
//! deterministic one-pass approximate mean built from iterated two-point
//! geodesic averaging.

use crate::error::{MvrError, Result};
use crate::manifold::{Manifold, ManifoldPoint};
use crate::solver::SolverSchedule;

/// A finite weighted sample on one manifold. Weights may be negative (signed
/// averaging weights arise in forward operators); when the sample is fed to a
/// mean the weights must sum to 1.
#[derive(Clone, Debug)]
pub struct WeightedSample {
    pub points: Vec<ManifoldPoint>,
    pub weights: Vec<f64>,
}

impl WeightedSample {
    pub fn new(points: Vec<ManifoldPoint>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(MvrError::InvalidArgument("empty sample".into()));
        }
        if points.len() != weights.len() {
            return Err(MvrError::InvalidArgument(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        let m = &points[0].manifold;
        for p in &points[1..] {
            if p.manifold != *m {
                return Err(MvrError::ManifoldMismatch {
                    left: m.name(),
                    right: p.manifold.name(),
                });
            }
        }
        Ok(WeightedSample { points, weights })
    }

    pub fn equal_weights(points: Vec<ManifoldPoint>) -> Result<Self> {
        let w = vec![1.0 / points.len().max(1) as f64; points.len()];
        WeightedSample::new(points, w)
    }

    pub fn manifold(&self) -> &Manifold {
        &self.points[0].manifold
    }

    fn coord_views(&self) -> Vec<&[f64]> {
        self.points.iter().map(|p| p.coords.as_slice()).collect()
    }
}

/// Default schedule for mean computations: fixed unit step, at most 100
/// iterations, gradient tolerance 1e-10.
pub fn mean_schedule() -> SolverSchedule {
    SolverSchedule {
        lambda0: 1.0,
        decay: 1.0,
        max_iters: 100,
        tol: 1e-10,
        ..SolverSchedule::default()
    }
}

/// Default schedule for the geodesic median: diminishing steps 1/k over 2000
/// iterations; the best iterate is returned, so tol only short-circuits.
pub fn median_schedule() -> SolverSchedule {
    SolverSchedule {
        lambda0: 1.0,
        decay: 1.0,
        max_iters: 2000,
        tol: 0.0,
        ..SolverSchedule::default()
    }
}

fn check_mean_weights(weights: &[f64]) -> Result<()> {
    let s: f64 = weights.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(MvrError::InvalidArgument(format!(
            "mean weights must sum to 1, got {s}"
        )));
    }
    Ok(())
}

/// Weighted Karcher mean: minimizes h ↦ ½ Σ_j w_j d(h, z_j)² by intrinsic
/// gradient descent started at the first positive-weight sample point.
///
/// With all weights nonnegative a fixed step of `schedule.lambda0` is taken;
/// with signed weights each step is backtracked on the signed objective.
/// Convergence means the gradient norm ‖Σ_j w_j log_h z_j‖ drops to
/// `schedule.tol`; running out of iterations yields a no-convergence error
/// carrying the last iterate and its gradient norm.
pub fn karcher_mean(sample: &WeightedSample, schedule: &SolverSchedule) -> Result<ManifoldPoint> {
    let m = sample.manifold().clone();
    let (h, _) = karcher_mean_coords(&m, &sample.coord_views(), &sample.weights, schedule)?;
    Ok(ManifoldPoint::new_unchecked(m, h))
}

/// Coordinate-level Karcher mean; returns (mean, final gradient norm).
pub fn karcher_mean_coords(
    m: &Manifold,
    points: &[&[f64]],
    weights: &[f64],
    schedule: &SolverSchedule,
) -> Result<(Vec<f64>, f64)> {
    karcher_mean_coords_from(m, None, points, weights, schedule)
}

/// [`karcher_mean_coords`] with an explicit starting point. A warm start
/// from a nearby solution (e.g. the mean of an interval extended by one
/// sample) cuts the iteration count considerably.
pub fn karcher_mean_coords_from(
    m: &Manifold,
    warm: Option<&[f64]>,
    points: &[&[f64]],
    weights: &[f64],
    schedule: &SolverSchedule,
) -> Result<(Vec<f64>, f64)> {
    if points.is_empty() || points.len() != weights.len() {
        return Err(MvrError::InvalidArgument("empty or mismatched sample".into()));
    }
    check_mean_weights(weights)?;
    if points.len() == 1 && warm.is_none() {
        return Ok((points[0].to_vec(), 0.0));
    }
    let amb = m.ambient_dim();
    let signed = weights.iter().any(|w| *w < 0.0);
    let start = weights
        .iter()
        .position(|w| *w > 0.0)
        .ok_or_else(|| MvrError::InvalidArgument("no positive weight in sample".into()))?;
    let mut h = warm.map(|w| w.to_vec()).unwrap_or_else(|| points[start].to_vec());
    let mut grad_norm = f64::INFINITY;
    for _ in 0..schedule.max_iters {
        let mut g = vec![0.0; amb];
        for (z, w) in points.iter().zip(weights) {
            let l = m.log(&h, z).value;
            for (gi, li) in g.iter_mut().zip(&l) {
                *gi += w * li;
            }
        }
        grad_norm = m.norm(&h, &g);
        if grad_norm <= schedule.tol {
            return Ok((h, grad_norm));
        }
        if !signed {
            let step: Vec<f64> = g.iter().map(|c| schedule.lambda0 * c).collect();
            h = m.exp(&h, &step);
        } else {
            // Signed weights break convexity; halve the step until the
            // objective decreases. Near the minimum the decrement is of
            // order grad² and drowns in roundoff, so a step whose objective
            // is flat at machine precision still counts if it shrinks the
            // gradient.
            let here = signed_objective(m, &h, points, weights);
            let flat = 1e-14 * (1.0 + here.abs());
            let mut s = schedule.lambda0;
            let mut moved = false;
            for _ in 0..50 {
                let step: Vec<f64> = g.iter().map(|c| s * c).collect();
                let cand = m.exp(&h, &step);
                let cand_obj = signed_objective(m, &cand, points, weights);
                if cand_obj < here
                    || ((cand_obj - here).abs() <= flat
                        && mean_grad_norm(m, &cand, points, weights) < grad_norm)
                {
                    h = cand;
                    moved = true;
                    break;
                }
                s *= 0.5;
            }
            if !moved {
                break;
            }
        }
    }
    Err(MvrError::NoConvergence {
        context: "karcher_mean".into(),
        residual: grad_norm,
        iters: schedule.max_iters,
        last: Some(Box::new(ManifoldPoint::new_unchecked(m.clone(), h))),
    })
}

fn mean_grad_norm(m: &Manifold, h: &[f64], points: &[&[f64]], weights: &[f64]) -> f64 {
    let mut g = vec![0.0; m.ambient_dim()];
    for (z, w) in points.iter().zip(weights) {
        let l = m.log(h, z).value;
        for (gi, li) in g.iter_mut().zip(&l) {
            *gi += w * li;
        }
    }
    m.norm(h, &g)
}

fn signed_objective(m: &Manifold, h: &[f64], points: &[&[f64]], weights: &[f64]) -> f64 {
    points
        .iter()
        .zip(weights)
        .map(|(z, w)| {
            let d = m.dist(h, z);
            0.5 * w * d * d
        })
        .sum()
}

/// Geodesic median: minimizes h ↦ Σ_j w_j d(h, z_j), started at the sample
/// point with the lowest objective (the landscape has vertex kinks at the
/// sample points, so a good start matters). Returns the best iterate seen.
pub fn intrinsic_median(
    sample: &WeightedSample,
    schedule: &SolverSchedule,
) -> Result<ManifoldPoint> {
    let m = sample.manifold().clone();
    if sample.points.len() == 1 {
        return Ok(sample.points[0].clone());
    }
    let (h, _) =
        intrinsic_median_coords(&m, None, &sample.coord_views(), &sample.weights, schedule)?;
    Ok(ManifoldPoint::new_unchecked(m, h))
}

/// Coordinate-level geodesic median with an optional warm start; returns
/// (median, objective value). Takes Weiszfeld fixed-point steps
/// exp_h((Σ w_j log_h z_j / d_j) / (Σ w_j / d_j)), falling back to a
/// diminishing subgradient step `lambda0 / k^decay` whenever the fixed-point
/// candidate fails to decrease the objective. Sample points within 1e-12 of
/// the iterate are excluded from the direction; the iterate is accepted as
/// optimal once the pull of the remaining points no longer exceeds the
/// coincident weight (the subgradient optimality condition at a kink).
pub fn intrinsic_median_coords(
    m: &Manifold,
    warm: Option<&[f64]>,
    points: &[&[f64]],
    weights: &[f64],
    schedule: &SolverSchedule,
) -> Result<(Vec<f64>, f64)> {
    if points.is_empty() || points.len() != weights.len() {
        return Err(MvrError::InvalidArgument("empty or mismatched sample".into()));
    }
    if weights.iter().any(|w| *w < 0.0) {
        return Err(MvrError::InvalidArgument("median weights must be nonnegative".into()));
    }
    schedule.validate()?;
    let amb = m.ambient_dim();
    let objective = |h: &[f64]| -> f64 {
        points.iter().zip(weights).map(|(z, w)| w * m.dist(h, z)).sum()
    };
    let mut h = match warm {
        Some(w) => w.to_vec(),
        None => {
            let start = (0..points.len())
                .min_by(|a, b| {
                    objective(points[*a])
                        .partial_cmp(&objective(points[*b]))
                        .expect("finite objective")
                })
                .expect("nonempty sample");
            points[start].to_vec()
        }
    };
    let mut best = h.clone();
    let mut best_obj = objective(&h);
    for k in 1..=schedule.max_iters {
        let mut g = vec![0.0; amb];
        let mut inv_sum = 0.0;
        let mut coincident = 0.0;
        for (z, w) in points.iter().zip(weights) {
            let d = m.dist(&h, z);
            if d < 1e-12 {
                coincident += w;
                continue;
            }
            let l = m.log(&h, z).value;
            for (gi, li) in g.iter_mut().zip(&l) {
                *gi += w * li / d;
            }
            inv_sum += w / d;
        }
        let gn = m.norm(&h, &g);
        if gn <= coincident + 1e-14 {
            break;
        }
        let fixed: Vec<f64> = g.iter().map(|c| c / inv_sum).collect();
        if m.norm(&h, &fixed) < 1e-13 {
            break;
        }
        let cand = m.exp(&h, &fixed);
        let cand_obj = objective(&cand);
        if cand_obj < best_obj {
            best_obj = cand_obj;
            best = cand.clone();
            h = cand;
        } else {
            let scale = schedule.step(k) / gn;
            let step: Vec<f64> = g.iter().map(|c| scale * c).collect();
            h = m.exp(&h, &step);
            let obj = objective(&h);
            if obj < best_obj {
                best_obj = obj;
                best = h.clone();
            }
        }
    }
    Ok((best, best_obj))
}

/// Deterministic approximate mean by left-to-right iterated two-point
/// geodesic averaging: after j points the running value is pulled toward
/// z_j by the fraction w_j / (w_1 + … + w_j). Exact on Euclidean factors and
/// for two points; negative weights extend geodesics past their endpoints.
pub fn mean_approx_geodesic(sample: &WeightedSample) -> Result<ManifoldPoint> {
    let m = sample.manifold().clone();
    let h = mean_approx_coords(&m, &sample.coord_views(), &sample.weights)?;
    Ok(ManifoldPoint::new_unchecked(m, h))
}

/// Coordinate-level variant of [`mean_approx_geodesic`].
pub fn mean_approx_coords(m: &Manifold, points: &[&[f64]], weights: &[f64]) -> Result<Vec<f64>> {
    if points.is_empty() || points.len() != weights.len() {
        return Err(MvrError::InvalidArgument("empty or mismatched sample".into()));
    }
    check_mean_weights(weights)?;
    let mut acc = weights[0];
    let mut out = points[0].to_vec();
    for (z, w) in points.iter().zip(weights).skip(1) {
        acc += w;
        // A vanishing running weight would make the pairing fraction blow
        // up; clamp it so degenerate signed prefixes stay finite.
        let denom = if acc.abs() < 1e-14 {
            if acc < 0.0 { -1e-14 } else { 1e-14 }
        } else {
            acc
        };
        let t = w / denom;
        if t != 0.0 {
            out = m.geopoint(&out, z, t).value;
        }
    }
    Ok(out)
}
