//! SO(3), stored as 9 row-major matrix entries. Tangents at R are matrices
//! RΩ with Ω skew; the metric ⟨A,B⟩_R = ½·tr(AᵀB) equals the dot product of
//! the axis-angle (vee) coordinates, so dist(I, rotation by θ) = θ.

use super::Flagged;
use crate::error::{MvrError, Result};
use nalgebra::{Matrix3, Vector3};
use std::f64::consts::PI;

pub(crate) fn mat(x: &[f64]) -> Matrix3<f64> {
    Matrix3::from_row_slice(x)
}

pub(crate) fn flat(m: &Matrix3<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

fn skew_part(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m - m.transpose()) * 0.5
}

/// Rodrigues formula.
fn expm(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta = w.norm();
    if theta < 1e-12 {
        let k = hat(w);
        return Matrix3::identity() + k + k * k * 0.5;
    }
    let k = hat(&(w / theta));
    Matrix3::identity() + k * theta.sin() + k * k * (1.0 - theta.cos())
}

/// Axis-angle coordinates of log(R). Near the π rotation the axis comes from
/// the symmetric part (well conditioned there); exactly at π the sign of the
/// axis is ambiguous and the branch with positive first nonzero component is
/// returned, flagged.
fn logm(r: &Matrix3<f64>) -> Flagged<Vector3<f64>> {
    let sv = vee(&skew_part(r));
    let s = sv.norm(); // sin θ for θ ∈ [0, π]
    let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = s.atan2(c);
    if PI - theta <= 1e-6 {
        // aaᵀ = (sym(R) − cosθ·I) / (1 − cosθ)
        let sym = (r + r.transpose()) * 0.5;
        let a_outer = (sym - Matrix3::identity() * c) / (1.0 - c);
        let k = (0..3).max_by(|&i, &j| a_outer[(i, i)].partial_cmp(&a_outer[(j, j)]).unwrap()).unwrap();
        let mut a = Vector3::new(a_outer[(0, k)], a_outer[(1, k)], a_outer[(2, k)]);
        a /= a.norm();
        if s > 1e-9 {
            if a.dot(&sv) < 0.0 {
                a = -a;
            }
        } else if let Some(first) = a.iter().find(|c| c.abs() > 1e-6) {
            if *first < 0.0 {
                a = -a;
            }
        }
        let non_unique = PI - theta <= 1e-9;
        Flagged { value: a * theta, non_unique }
    } else if s < 1e-12 {
        Flagged::unique(sv)
    } else {
        Flagged::unique(sv * (theta / s))
    }
}

pub(crate) fn constraint_violation(x: &[f64]) -> f64 {
    let r = mat(x);
    let drift = (r.transpose() * r - Matrix3::identity()).norm();
    drift + (r.determinant() - 1.0).abs()
}

/// Nearest rotation by the orthogonal polar factor (via SVD, det corrected).
pub(crate) fn project(x: &mut [f64]) {
    let svd = mat(x).svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = u * vt;
    if d.determinant() < 0.0 {
        let u2 = u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        d = u2 * vt;
    }
    x.copy_from_slice(&flat(&d));
}

pub(crate) fn project_tangent(p: &[f64], v: &mut [f64]) {
    let r = mat(p);
    let omega = skew_part(&(r.transpose() * mat(v)));
    v.copy_from_slice(&flat(&(r * omega)));
}

pub(crate) fn exp(p: &[f64], v: &[f64]) -> Vec<f64> {
    let r = mat(p);
    let omega = vee(&skew_part(&(r.transpose() * mat(v))));
    let mut out = flat(&(r * expm(&omega)));
    project(&mut out);
    out
}

pub(crate) fn log(p: &[f64], q: &[f64]) -> Flagged<Vec<f64>> {
    let r = mat(p);
    logm(&(r.transpose() * mat(q))).map(|w| flat(&(r * hat(&w))))
}

pub(crate) fn dist(p: &[f64], q: &[f64]) -> f64 {
    logm(&(mat(p).transpose() * mat(q))).value.norm()
}

/// Left translation: keeps body-frame coordinates Ω fixed. Errors on (near)
/// cut-locus pairs where the connecting geodesic itself is ambiguous.
pub(crate) fn transport_left(p: &[f64], q: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let rel = logm(&(mat(p).transpose() * mat(q)));
    if rel.non_unique {
        return Err(MvrError::CutLocus("rotation transport across a π rotation".into()));
    }
    let omega = skew_part(&(mat(p).transpose() * mat(v)));
    Ok(flat(&(mat(q) * omega)))
}

/// Levi-Civita transport along exp_p(τ·dir): body coordinates are conjugated
/// by the half-step rotation, Ψ ↦ e^{−Ω/2}·Ψ·e^{Ω/2}.
pub(crate) fn transport_lc_along(p: &[f64], dir: &[f64], v: &[f64]) -> Vec<f64> {
    let r = mat(p);
    let w = vee(&skew_part(&(r.transpose() * mat(dir))));
    let psi = skew_part(&(r.transpose() * mat(v)));
    let half = expm(&(w * 0.5));
    let psi_out = half.transpose() * psi * half;
    let q = exp(p, dir);
    flat(&(mat(&q) * psi_out))
}

pub(crate) fn tangent_basis(p: &[f64]) -> Vec<Vec<f64>> {
    let r = mat(p);
    (0..3)
        .map(|i| {
            let mut e = Vector3::zeros();
            e[i] = 1.0;
            flat(&(r * hat(&e)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rot_z(theta: f64) -> Vec<f64> {
        let (s, c) = theta.sin_cos();
        vec![c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0]
    }

    #[test]
    fn quarter_turn_about_z_is_at_distance_half_pi() {
        let id = flat(&Matrix3::identity());
        assert!((dist(&id, &rot_z(PI / 2.0)) - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn log_near_pi_recovers_axis() {
        let id = flat(&Matrix3::identity());
        for &theta in &[PI - 1e-8, PI - 1e-4, PI] {
            let l = log(&id, &rot_z(theta));
            let omega = vee(&skew_part(&mat(&l.value)));
            assert!((omega.norm() - theta).abs() < 1e-6, "angle at theta={theta}");
            assert!(omega.x.abs() < 1e-6 && omega.y.abs() < 1e-6);
            assert!(omega.z > 0.0, "π branch must pick the positive axis");
        }
        assert!(log(&id, &rot_z(PI)).non_unique);
    }

    #[test]
    fn project_restores_orthonormality() {
        let mut x = rot_z(0.3);
        for c in x.iter_mut() {
            *c += 1e-3;
        }
        project(&mut x);
        assert!(constraint_violation(&x) < 1e-12);
    }
}
