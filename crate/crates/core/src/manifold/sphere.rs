//! Unit sphere Sⁿ ⊂ ℝⁿ⁺¹ with the round metric.

use super::{dot, norm2, Flagged};

pub(crate) fn project(x: &mut [f64]) {
    let n = norm2(x);
    if n > 0.0 {
        for c in x.iter_mut() {
            *c /= n;
        }
    } else {
        x[0] = 1.0;
    }
}

pub(crate) fn project_tangent(p: &[f64], v: &mut [f64]) {
    let a = dot(p, v);
    for (vi, pi) in v.iter_mut().zip(p) {
        *vi -= a * pi;
    }
}

pub(crate) fn exp(p: &[f64], v: &[f64]) -> Vec<f64> {
    let theta = norm2(v);
    let mut out = if theta < 1e-16 {
        p.to_vec()
    } else {
        let (s, c) = theta.sin_cos();
        p.iter().zip(v).map(|(pi, vi)| c * pi + s * vi / theta).collect()
    };
    project(&mut out);
    out
}

/// Angle and the component of `q` orthogonal to `p`. atan2 keeps the angle
/// well conditioned near both poles of the formula.
fn angle_parts(p: &[f64], q: &[f64]) -> (f64, Vec<f64>, f64) {
    let c = dot(p, q).clamp(-1.0, 1.0);
    let w: Vec<f64> = q.iter().zip(p).map(|(qi, pi)| qi - c * pi).collect();
    let nw = norm2(&w);
    (nw.atan2(c), w, nw)
}

pub(crate) fn dist(p: &[f64], q: &[f64]) -> f64 {
    angle_parts(p, q).0
}

pub(crate) fn log(p: &[f64], q: &[f64]) -> Flagged<Vec<f64>> {
    let (theta, w, nw) = angle_parts(p, q);
    let c = dot(p, q);
    if nw > 1e-9 || c >= 0.0 {
        if nw < 1e-18 {
            Flagged::unique(vec![0.0; p.len()])
        } else {
            Flagged::unique(w.iter().map(|wi| wi * theta / nw).collect())
        }
    } else {
        // antipodal: any direction works; project out the coordinate axis
        // p is least aligned with for a deterministic, stable choice
        let k = p
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.abs().partial_cmp(&b.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let mut u: Vec<f64> = p.iter().map(|pi| -p[k] * pi).collect();
        u[k] += 1.0;
        let nu = norm2(&u);
        Flagged::flagged(u.iter().map(|ui| ui * theta / nu).collect())
    }
}

/// Parallel transport along the geodesic exp_p(τ·dir), τ ∈ [0,1], for a
/// direction of any arc length (the segment may pass the cut locus).
pub(crate) fn transport_along(p: &[f64], dir: &[f64], v: &[f64]) -> Vec<f64> {
    let theta = norm2(dir);
    if theta < 1e-16 {
        return v.to_vec();
    }
    let e: Vec<f64> = dir.iter().map(|d| d / theta).collect();
    let a = dot(v, &e);
    let (s, c) = theta.sin_cos();
    let mut out: Vec<f64> = v
        .iter()
        .zip(e.iter().zip(p))
        .map(|(vi, (ei, pi))| vi + a * ((c - 1.0) * ei - s * pi))
        .collect();
    let q = exp(p, dir);
    project_tangent(&q, &mut out);
    out
}

/// Householder frame completing `p` to an orthonormal basis of ℝⁿ⁺¹; the
/// reflector maps e₁ to p, and its remaining columns span the tangent space.
pub(crate) fn tangent_basis(p: &[f64]) -> Vec<Vec<f64>> {
    let n = p.len();
    let mut u = p.to_vec();
    u[0] -= 1.0;
    let uu = dot(&u, &u);
    let mut out = Vec::with_capacity(n - 1);
    for j in 1..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        if uu > 1e-30 {
            let f = 2.0 * u[j] / uu;
            for (ei, ui) in e.iter_mut().zip(&u) {
                *ei -= f * ui;
            }
        }
        out.push(e);
    }
    out
}
