//! Differentials of the basic geodesic maps (exp, log, geodesic points) and
//! their metric adjoints.
//!
//! Closed forms everywhere: the flat factors are linear; sphere and SO(3)
//! have constant sectional curvature (1 and ¼ under the ½·tr metric, SO(3)
//! being a round ℝP³ of radius 2), so Jacobi fields split into a tangential
//! part with affine factors and an orthogonal part with sin-ratio factors in
//! a parallel frame; SPD(n) is handled by the eigenvalue expansion of the
//! symmetric-space Jacobi equation, giving per-entry sinh-ratio factors with
//! rates |wᵢ−wⱼ|/2 in the eigenbasis of the congruence-reduced direction.
//!
//! A central finite-difference fallback is provided for arbitrary
//! point-valued maps and scalar functions; the analytic paths above are used
//! by all gradient code and are themselves validated against it.

use super::Manifold;
use crate::error::{MvrError, Result};

/// Which geodesic map is being differentiated, and in which argument.
///
/// Anchor convention for `diff_of_map(m, map, a, b, xi)`:
/// - `ExpVector`: a = p, b = v (tangent at p); v ↦ exp_p(v); ξ varies v in
///   T_p; result in T_{exp_p(v)}.
/// - `LogArg`: a = p, b = q; q ↦ log_p(q); ξ ∈ T_q; result in T_p.
/// - `LogBase`: a = p, b = q; p ↦ log_p(q); ξ ∈ T_p; result in T_p.
/// - `GeoFirst(t)`: a = p, b = q; p ↦ [p,q]_t; ξ ∈ T_p; result in T_{[p,q]_t}.
/// - `GeoSecond(t)`: a = p, b = q; q ↦ [p,q]_t; ξ ∈ T_q; result in T_{[p,q]_t}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GeodesicMap {
    ExpVector,
    LogArg,
    LogBase,
    GeoFirst(f64),
    GeoSecond(f64),
}

impl GeodesicMap {
    /// True when the varied argument lives at the second anchor point.
    fn input_at_q(self) -> bool {
        matches!(self, GeodesicMap::LogArg | GeodesicMap::GeoSecond(_))
    }
}

fn checked_log(m: &Manifold, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let l = m.log(x, y);
    if l.non_unique {
        return Err(MvrError::CutLocus(
            "differential of a geodesic map across the cut locus".into(),
        ));
    }
    Ok(l.value)
}

fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    for (o, xi) in out.iter_mut().zip(x) {
        *o += a * xi;
    }
}

/// Directional derivative of the named geodesic map; see [`GeodesicMap`] for
/// the anchor and tangent-space conventions.
pub fn diff_of_map(
    m: &Manifold,
    map: GeodesicMap,
    a: &[f64],
    b: &[f64],
    xi: &[f64],
) -> Result<Vec<f64>> {
    match m {
        Manifold::Euclidean(_) | Manifold::Circle => Ok(flat_diff(map, xi)),
        Manifold::Sphere(_) => const_curvature_diff(m, 1.0, map, a, b, xi),
        Manifold::Rotations3 => const_curvature_diff(m, 0.25, map, a, b, xi),
        Manifold::Spd(n) => Ok(spd_diff(*n, map, a, b, xi)),
        Manifold::Product(_) => {
            let mut out = vec![0.0; m.ambient_dim()];
            for (f, r) in m.factors() {
                let part = diff_of_map(f, map, &a[r.clone()], &b[r.clone()], &xi[r.clone()])?;
                out[r].copy_from_slice(&part);
            }
            Ok(out)
        }
    }
}

/// Metric adjoint of [`diff_of_map`]: takes a tangent `w` at the output point
/// of the map and returns the tangent at the varied argument with
/// ⟨w, D ξ⟩ = ⟨D* w, ξ⟩. Built by pairing against an orthonormal basis.
pub fn adjoint_diff_of_map(
    m: &Manifold,
    map: GeodesicMap,
    a: &[f64],
    b: &[f64],
    w: &[f64],
) -> Result<Vec<f64>> {
    let in_base: &[f64] = if map.input_at_q() { b } else { a };
    let out_base: Vec<f64> = match map {
        GeodesicMap::ExpVector => m.exp(a, b),
        GeodesicMap::LogArg | GeodesicMap::LogBase => a.to_vec(),
        GeodesicMap::GeoFirst(t) | GeodesicMap::GeoSecond(t) => m.geopoint(a, b, t).value,
    };
    let mut out = vec![0.0; m.ambient_dim()];
    for basis_vec in m.tangent_basis(in_base) {
        let image = diff_of_map(m, map, a, b, &basis_vec)?;
        let coef = m.inner(&out_base, w, &image);
        axpy(&mut out, coef, &basis_vec);
    }
    Ok(out)
}

fn flat_diff(map: GeodesicMap, xi: &[f64]) -> Vec<f64> {
    let s = match map {
        GeodesicMap::ExpVector | GeodesicMap::LogArg => 1.0,
        GeodesicMap::LogBase => -1.0,
        GeodesicMap::GeoFirst(t) => 1.0 - t,
        GeodesicMap::GeoSecond(t) => t,
    };
    xi.iter().map(|c| c * s).collect()
}

/// Sphere / SO(3): tangential Jacobi modes are affine in arclength,
/// orthogonal modes scale with sin ratios of φ = √κ·d; components are moved
/// between tangent spaces by Levi-Civita transport along the geodesic.
fn const_curvature_diff(
    m: &Manifold,
    kappa: f64,
    map: GeodesicMap,
    a: &[f64],
    b: &[f64],
    xi: &[f64],
) -> Result<Vec<f64>> {
    // geodesic tangent at the input-side base point, pointing from p to q
    let (base, l_fwd) = if map.input_at_q() {
        let l_q = checked_log(m, b, a)?;
        (b, l_q.iter().map(|c| -c).collect::<Vec<f64>>())
    } else if matches!(map, GeodesicMap::ExpVector) {
        (a, b.to_vec())
    } else {
        (a, checked_log(m, a, b)?)
    };
    let d = m.norm(base, &l_fwd);
    if d < 1e-12 {
        return Ok(flat_diff(map, xi));
    }
    let phi = kappa.sqrt() * d;
    let sphi = phi.sin();
    if sphi.abs() < 1e-8 {
        return Err(MvrError::CutLocus(
            "geodesic-map differential at a conjugate point".into(),
        ));
    }
    let e: Vec<f64> = l_fwd.iter().map(|c| c / d).collect();
    let c = m.inner(base, xi, &e);
    let xi_orth: Vec<f64> = xi.iter().zip(&e).map(|(x, ei)| x - c * ei).collect();

    let (tan_coef, orth_factor) = match map {
        GeodesicMap::ExpVector => (c, sphi / phi),
        GeodesicMap::LogArg => (c, phi / sphi),
        GeodesicMap::LogBase => (-c, -phi * phi.cos() / sphi),
        GeodesicMap::GeoFirst(t) => ((1.0 - t) * c, ((1.0 - t) * phi).sin() / sphi),
        GeodesicMap::GeoSecond(t) => (t * c, (t * phi).sin() / sphi),
    };
    let mut w = vec![0.0; xi.len()];
    axpy(&mut w, tan_coef, &e);
    axpy(&mut w, orth_factor, &xi_orth);

    // arc from the input base to the output point, along the same geodesic
    let dir: Option<Vec<f64>> = match map {
        GeodesicMap::ExpVector => Some(b.to_vec()),
        GeodesicMap::LogArg => Some(l_fwd.iter().map(|c| -c).collect()),
        GeodesicMap::LogBase => None,
        GeodesicMap::GeoFirst(t) => Some(l_fwd.iter().map(|c| c * t).collect()),
        GeodesicMap::GeoSecond(t) => Some(l_fwd.iter().map(|c| c * (t - 1.0)).collect()),
    };
    let mut out = match &dir {
        Some(dirv) => m.transport_along(base, dirv, &w),
        None => w,
    };
    let out_base = match &dir {
        Some(dirv) => m.exp(base, dirv),
        None => base.to_vec(),
    };
    m.project_tangent(&out_base, &mut out);
    Ok(out)
}

/// SPD: congruence by P^{−1/2} reduces the geodesic to e^{tW}; in the
/// eigenbasis of W the parallel frame is e^{tW/2}·S·e^{tW/2} and each mode
/// (i,j) obeys an independent Jacobi equation with rate μ = |wᵢ−wⱼ|/2.
fn spd_diff(n: usize, map: GeodesicMap, a: &[f64], b: &[f64], xi: &[f64]) -> Vec<f64> {
    use nalgebra::DMatrix;
    let amat = super::spd::mat(n, a);
    let eig_a = ((&amat + amat.transpose()) * 0.5).symmetric_eigen();
    let lam = eig_a.eigenvalues.map(|l| l.max(1e-300));
    let ua = &eig_a.eigenvectors;
    let e = ua * DMatrix::from_diagonal(&lam.map(|l| l.sqrt())) * ua.transpose();
    let einv = ua * DMatrix::from_diagonal(&lam.map(|l| 1.0 / l.sqrt())) * ua.transpose();

    let reduce = |x: &[f64]| -> DMatrix<f64> {
        let m = &einv * super::spd::mat(n, x) * &einv;
        (&m + m.transpose()) * 0.5
    };
    let w_mat = if matches!(map, GeodesicMap::ExpVector) {
        reduce(b)
    } else {
        let q_red = reduce(b);
        let eig_q = q_red.symmetric_eigen();
        &eig_q.eigenvectors
            * DMatrix::from_diagonal(&eig_q.eigenvalues.map(|l| l.max(1e-300).ln()))
            * eig_q.eigenvectors.transpose()
    };
    let eig_w = w_mat.symmetric_eigen();
    let (u, w) = (&eig_w.eigenvectors, &eig_w.eigenvalues);

    // W-eigenbasis coordinates of ξ, pulled to the parallel frame at the
    // input parameter (0 for T_p inputs, 1 for T_q inputs)
    let mut cmat = u.transpose() * reduce(xi) * u;
    if map.input_at_q() {
        for i in 0..n {
            for j in 0..n {
                cmat[(i, j)] *= (-(w[i] + w[j]) * 0.5).exp();
            }
        }
    }

    let s_out = match map {
        GeodesicMap::ExpVector => 1.0,
        GeodesicMap::LogArg | GeodesicMap::LogBase => 0.0,
        GeodesicMap::GeoFirst(t) | GeodesicMap::GeoSecond(t) => t,
    };
    for i in 0..n {
        for j in 0..n {
            let mu = (w[i] - w[j]).abs() * 0.5;
            let g = mode_factor(map, mu);
            // apply the mode factor, then leave the parallel frame at s_out
            cmat[(i, j)] *= g * ((w[i] + w[j]) * 0.5 * s_out).exp();
        }
    }
    let out = &e * (u * cmat * u.transpose()) * &e;
    super::spd::flat(&((&out + out.transpose()) * 0.5))
}

/// Jacobi boundary-value factors for one SPD mode with rate μ ≥ 0.
fn mode_factor(map: GeodesicMap, mu: f64) -> f64 {
    if mu < 1e-9 {
        return match map {
            GeodesicMap::ExpVector => 1.0,
            GeodesicMap::LogArg => 1.0,
            GeodesicMap::LogBase => -1.0,
            GeodesicMap::GeoFirst(t) => 1.0 - t,
            GeodesicMap::GeoSecond(t) => t,
        };
    }
    match map {
        GeodesicMap::ExpVector => mu.sinh() / mu,
        GeodesicMap::LogArg => mu / mu.sinh(),
        GeodesicMap::LogBase => -mu * mu.cosh() / mu.sinh(),
        GeodesicMap::GeoFirst(t) => ((1.0 - t) * mu).sinh() / mu.sinh(),
        GeodesicMap::GeoSecond(t) => (t * mu).sinh() / mu.sinh(),
    }
}

/// Central finite-difference differential of an arbitrary point-valued map,
/// read off in the tangent space at f(x) through the log map. Fallback for
/// maps without a closed form, and the oracle the analytic paths are tested
/// against.
pub fn diff_point_map_fd(
    m_in: &Manifold,
    m_out: &Manifold,
    f: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    x: &[f64],
    xi: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    let step: Vec<f64> = xi.iter().map(|c| c * h).collect();
    let neg: Vec<f64> = xi.iter().map(|c| -c * h).collect();
    let fw = f(&m_in.exp(x, &step))?;
    let bw = f(&m_in.exp(x, &neg))?;
    let center = f(x)?;
    let lf = m_out.log(&center, &fw).value;
    let lb = m_out.log(&center, &bw).value;
    Ok(lf.iter().zip(&lb).map(|(a, b)| (a - b) / (2.0 * h)).collect())
}

/// Central finite-difference Riemannian gradient of a scalar function.
pub fn grad_scalar_fd(
    m: &Manifold,
    f: &dyn Fn(&[f64]) -> Result<f64>,
    x: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; m.ambient_dim()];
    for basis_vec in m.tangent_basis(x) {
        let step: Vec<f64> = basis_vec.iter().map(|c| c * h).collect();
        let neg: Vec<f64> = basis_vec.iter().map(|c| -c * h).collect();
        let df = (f(&m.exp(x, &step))? - f(&m.exp(x, &neg))?) / (2.0 * h);
        axpy(&mut out, df, &basis_vec);
    }
    Ok(out)
}
