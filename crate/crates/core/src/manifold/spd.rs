//! Symmetric positive definite n×n matrices with the affine-invariant metric
//! ⟨V,W⟩_P = tr(P⁻¹VP⁻¹W). All operations reduce to symmetric eigenvalue
//! problems after congruence by P^{±1/2}.

use nalgebra::{DMatrix, DVector};

pub(crate) fn mat(n: usize, x: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, x)
}

pub(crate) fn flat(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn sym_eig(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let eig = symmetrize(m).symmetric_eigen();
    (eig.eigenvectors, eig.eigenvalues)
}

/// U·diag(f(λ))·Uᵀ for symmetric input.
fn sym_apply(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (u, lam) = sym_eig(m);
    let d = DMatrix::from_diagonal(&lam.map(f));
    &u * d * u.transpose()
}

/// P^{1/2} and P^{−1/2}; eigenvalues clipped away from zero first.
fn sqrt_pair(n: usize, p: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let (u, lam) = sym_eig(&mat(n, p));
    let lam = lam.map(|l| l.max(1e-300));
    let sq = DMatrix::from_diagonal(&lam.map(|l| l.sqrt()));
    let isq = DMatrix::from_diagonal(&lam.map(|l| 1.0 / l.sqrt()));
    (&u * sq * u.transpose(), &u * isq * u.transpose())
}

pub(crate) fn constraint_violation(n: usize, x: &[f64]) -> f64 {
    let m = mat(n, x);
    let asym = (&m - m.transpose()).norm();
    let (_, lam) = sym_eig(&m);
    let neg = lam.iter().fold(0.0f64, |acc, &l| acc.max(-l));
    asym + neg
}

pub(crate) fn project(n: usize, x: &mut [f64]) {
    let out = sym_apply(&mat(n, x), |l| l.max(1e-12));
    x.copy_from_slice(&flat(&out));
}

pub(crate) fn project_tangent(n: usize, v: &mut [f64]) {
    let out = symmetrize(&mat(n, v));
    v.copy_from_slice(&flat(&out));
}

pub(crate) fn exp(n: usize, p: &[f64], v: &[f64]) -> Vec<f64> {
    let (e, einv) = sqrt_pair(n, p);
    let s = symmetrize(&(&einv * mat(n, v) * &einv));
    let mut out = flat(&(&e * sym_apply(&s, f64::exp) * &e));
    project(n, &mut out);
    out
}

pub(crate) fn log(n: usize, p: &[f64], q: &[f64]) -> Vec<f64> {
    let (e, einv) = sqrt_pair(n, p);
    let a = symmetrize(&(&einv * mat(n, q) * &einv));
    let w = sym_apply(&a, |l| l.max(1e-300).ln());
    flat(&symmetrize(&(&e * w * &e)))
}

pub(crate) fn dist(n: usize, p: &[f64], q: &[f64]) -> f64 {
    let (_, einv) = sqrt_pair(n, p);
    let a = symmetrize(&(&einv * mat(n, q) * &einv));
    let (_, lam) = sym_eig(&a);
    lam.iter().map(|&l| l.max(1e-300).ln().powi(2)).sum::<f64>().sqrt()
}

pub(crate) fn inner(n: usize, p: &[f64], v: &[f64], w: &[f64]) -> f64 {
    let (_, einv) = sqrt_pair(n, p);
    let sv = &einv * mat(n, v) * &einv;
    let sw = &einv * mat(n, w) * &einv;
    (sv.transpose() * sw).trace()
}

/// Transport from P to Q by congruence with E·(P^{−1/2}QP^{−1/2})^{1/2}·E⁻¹,
/// the geodesic square-root factor (Levi-Civita along the minimal geodesic).
pub(crate) fn transport(n: usize, p: &[f64], q: &[f64], v: &[f64]) -> Vec<f64> {
    let (e, einv) = sqrt_pair(n, p);
    let a = symmetrize(&(&einv * mat(n, q) * &einv));
    let t = &e * sym_apply(&a, |l| l.max(1e-300).sqrt()) * &einv;
    flat(&symmetrize(&(&t * mat(n, v) * t.transpose())))
}

/// Transport along exp_P(τ·dir): congruence by E·exp(W/2)·E⁻¹ with
/// W = E⁻¹·dir·E⁻¹. Agrees with [`transport`] when dir = log_P(Q).
pub(crate) fn transport_along(n: usize, p: &[f64], dir: &[f64], v: &[f64]) -> Vec<f64> {
    let (e, einv) = sqrt_pair(n, p);
    let w = symmetrize(&(&einv * mat(n, dir) * &einv));
    let t = &e * sym_apply(&w, |l| (0.5 * l).exp()) * &einv;
    flat(&symmetrize(&(&t * mat(n, v) * t.transpose())))
}

/// Orthonormal symmetric basis at I (e_ii and (e_ij+e_ji)/√2) pushed through
/// congruence by P^{1/2}; stays orthonormal in the affine-invariant metric.
pub(crate) fn tangent_basis(n: usize, p: &[f64]) -> Vec<Vec<f64>> {
    let (e, _) = sqrt_pair(n, p);
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            let mut s = DMatrix::zeros(n, n);
            if i == j {
                s[(i, i)] = 1.0;
            } else {
                let f = 0.5f64.sqrt();
                s[(i, j)] = f;
                s[(j, i)] = f;
            }
            out.push(flat(&(&e * s * &e)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_at_identity_is_matrix_exponential() {
        let id = flat(&DMatrix::identity(3, 3));
        let out = exp(3, &id, &id);
        let e = std::f64::consts::E;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { e } else { 0.0 };
                assert!((out[3 * i + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dist_identity_to_scaled_identity() {
        let id = flat(&DMatrix::identity(3, 3));
        let scaled: Vec<f64> = id.iter().map(|c| c * std::f64::consts::E).collect();
        assert!((dist(3, &id, &scaled) - 3.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn inner_at_identity_is_frobenius() {
        let id = flat(&DMatrix::identity(2, 2));
        let v = vec![1.0, 2.0, 2.0, -1.0];
        assert!((inner(2, &id, &v, &v) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn basis_is_orthonormal_in_the_affine_metric() {
        let p = vec![2.0, 0.3, 0.3, 1.0];
        let basis = tangent_basis(2, &p);
        assert_eq!(basis.len(), 3);
        for (i, bi) in basis.iter().enumerate() {
            for (j, bj) in basis.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((inner(2, &p, bi, bj) - want).abs() < 1e-10);
            }
        }
    }
}
