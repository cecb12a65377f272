//! Shared fixtures and independent oracles for the integration tests.
//!
//! Everything here is deliberately built from first principles (RK4
//! integration, ladder constructions, exhaustive search, dense grids) rather
//! than from the library's own algorithms, so agreement is evidence and not
//! tautology. Only exp/log/geopoint enter the constructions, and those are
//! themselves pinned by closed-form examples and the ODE oracle below.

#![allow(dead_code)]

use mvr_core::manifold::Manifold;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One manifold of every supported kind, plus a product.
pub fn manifold_zoo() -> Vec<Manifold> {
    vec![
        Manifold::Euclidean(3),
        Manifold::Circle,
        Manifold::Sphere(2),
        Manifold::Rotations3,
        Manifold::Spd(3),
        Manifold::product(vec![Manifold::Circle, Manifold::Euclidean(2)]).unwrap(),
    ]
}

/// A canonical base point (origin / north pole / identity).
pub fn base_point(m: &Manifold) -> Vec<f64> {
    match m {
        Manifold::Euclidean(d) => vec![0.0; *d],
        Manifold::Circle => vec![0.0],
        Manifold::Sphere(n) => {
            let mut p = vec![0.0; n + 1];
            p[*n] = 1.0;
            p
        }
        Manifold::Rotations3 => vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        Manifold::Spd(n) => {
            let mut p = vec![0.0; n * n];
            for i in 0..*n {
                p[i * n + i] = 1.0;
            }
            p
        }
        Manifold::Product(_) => {
            let mut p = Vec::new();
            for (f, _) in m.factors() {
                p.extend(base_point(f));
            }
            p
        }
    }
}

/// Random tangent at `p` with metric norm exactly `norm`.
pub fn random_tangent(m: &Manifold, p: &[f64], norm: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let basis = m.tangent_basis(p);
    let mut v = vec![0.0; m.ambient_dim()];
    for b in &basis {
        let a: f64 = StandardNormal.sample(rng);
        for (vi, bi) in v.iter_mut().zip(b) {
            *vi += a * bi;
        }
    }
    let n = m.norm(p, &v);
    if n < 1e-12 {
        return random_tangent(m, p, norm, rng);
    }
    for vi in v.iter_mut() {
        *vi *= norm / n;
    }
    v
}

/// Random point: uniform angle on the circle, normalized Gaussian on the
/// sphere, exp of a random tangent at the canonical base elsewhere.
pub fn random_point(m: &Manifold, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match m {
        Manifold::Euclidean(d) => {
            (0..*d).map(|_| 2.0 * Distribution::<f64>::sample(&StandardNormal, rng)).collect()
        }
        Manifold::Circle => vec![rng.random_range(-PI..PI)],
        Manifold::Sphere(n) => {
            let mut p: Vec<f64> = (0..n + 1).map(|_| StandardNormal.sample(rng)).collect();
            let nn = p.iter().map(|c| c * c).sum::<f64>().sqrt();
            if nn < 1e-6 {
                return random_point(m, rng);
            }
            for c in p.iter_mut() {
                *c /= nn;
            }
            p
        }
        Manifold::Rotations3 => {
            let b = base_point(m);
            let v = random_tangent(m, &b, rng.random_range(0.0..2.5), rng);
            m.exp(&b, &v)
        }
        Manifold::Spd(_) => {
            let b = base_point(m);
            let v = random_tangent(m, &b, rng.random_range(0.0..1.5), rng);
            m.exp(&b, &v)
        }
        Manifold::Product(_) => {
            let mut p = Vec::new();
            for (f, _) in m.factors() {
                p.extend(random_point(f, rng));
            }
            p
        }
    }
}

pub fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    for (o, xi) in out.iter_mut().zip(x) {
        *o += a * xi;
    }
}

pub fn scaled(x: &[f64], a: f64) -> Vec<f64> {
    x.iter().map(|c| c * a).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Independent geodesic oracle for SPD: RK4 integration of the geodesic
/// equation γ̈ = γ̇ γ⁻¹ γ̇ from (p, v) over unit time.
pub fn spd_geodesic_rk4(n: usize, p: &[f64], v: &[f64], steps: usize) -> Vec<f64> {
    use nalgebra::DMatrix;
    let mut g = DMatrix::from_row_slice(n, n, p);
    let mut gd = DMatrix::from_row_slice(n, n, v);
    let h = 1.0 / steps as f64;
    let acc = |g: &DMatrix<f64>, gd: &DMatrix<f64>| -> DMatrix<f64> {
        let gi = g.clone().try_inverse().expect("geodesic iterate must stay invertible");
        gd * gi * gd
    };
    for _ in 0..steps {
        let k1g = gd.clone();
        let k1v = acc(&g, &gd);
        let k2g = &gd + &k1v * (h / 2.0);
        let k2v = acc(&(&g + &k1g * (h / 2.0)), &k2g);
        let k3g = &gd + &k2v * (h / 2.0);
        let k3v = acc(&(&g + &k2g * (h / 2.0)), &k3g);
        let k4g = &gd + &k3v * h;
        let k4v = acc(&(&g + &k3g * h), &k4g);
        g += (k1g + &k2g * 2.0 + &k3g * 2.0 + k4g) * (h / 6.0);
        gd += (k1v + &k2v * 2.0 + &k3v * 2.0 + k4v) * (h / 6.0);
    }
    g.transpose().as_slice().to_vec()
}

/// Schild's ladder with `k` rungs and a small vector scale `eps`: a
/// transport approximation built from geodesic midpoints and extensions
/// only. Converges to Levi-Civita transport as k → ∞, eps → 0.
pub fn schild_ladder_transport(
    m: &Manifold,
    p: &[f64],
    q: &[f64],
    v: &[f64],
    k: usize,
    eps: f64,
) -> Vec<f64> {
    let mut x = p.to_vec();
    let mut y = m.exp(p, &scaled(v, eps));
    for step in 1..=k {
        let t = step as f64 / k as f64;
        let x_next = m.geopoint(p, q, t).value;
        let mid = m.geopoint(&y, &x_next, 0.5).value;
        y = m.geopoint(&x, &mid, 2.0).value;
        x = x_next;
    }
    scaled(&m.log(&x, &y).value, 1.0 / eps)
}

/// Central finite difference of a point-valued map of one point argument,
/// read in the tangent space at the unperturbed output.
pub fn fd_point_map(
    m_in: &Manifold,
    m_out: &Manifold,
    f: &dyn Fn(&[f64]) -> Vec<f64>,
    x: &[f64],
    xi: &[f64],
    h: f64,
) -> Vec<f64> {
    let fp = f(&m_in.exp(x, &scaled(xi, h)));
    let fm = f(&m_in.exp(x, &scaled(xi, -h)));
    let c = f(x);
    let lp = m_out.log(&c, &fp).value;
    let lm = m_out.log(&c, &fm).value;
    lp.iter().zip(&lm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
}

/// Central finite-difference Riemannian gradient of a scalar function, built
/// from an orthonormal tangent basis.
pub fn fd_gradient(
    m: &Manifold,
    f: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    h: f64,
) -> Vec<f64> {
    let mut out = vec![0.0; m.ambient_dim()];
    for b in m.tangent_basis(x) {
        let df = (f(&m.exp(x, &scaled(&b, h))) - f(&m.exp(x, &scaled(&b, -h)))) / (2.0 * h);
        axpy(&mut out, df, &b);
    }
    out
}

/// Exact scalar 1-D TV denoising oracle: minimizes
/// ½ Σ (x_i − f_i)² + α Σ |x_{i+1} − x_i| by coordinate ascent on the dual
/// box-constrained quadratic. Each dual coordinate has curvature 2 and its
/// clamped exact maximizer is taken, so the sweep converges to the unique
/// dual optimum; the primal x = f − Dᵀp is read off at the end.
pub fn tv1d_l2_oracle(f: &[f64], alpha: f64) -> Vec<f64> {
    let n = f.len();
    if n <= 1 {
        return f.to_vec();
    }
    let mut p = vec![0.0; n - 1];
    let mut x = f.to_vec();
    for _ in 0..400_000 {
        let mut biggest = 0.0_f64;
        for i in 0..n - 1 {
            let new = (p[i] + 0.5 * (x[i + 1] - x[i])).clamp(-alpha, alpha);
            let d = new - p[i];
            if d != 0.0 {
                p[i] = new;
                x[i] += d;
                x[i + 1] -= d;
            }
            biggest = biggest.max(d.abs());
        }
        if biggest < 1e-15 {
            break;
        }
    }
    x
}

/// Energy of the scalar 1-D TV model the oracle above minimizes.
pub fn tv1d_l2_energy(x: &[f64], f: &[f64], alpha: f64) -> f64 {
    let fit: f64 = x.iter().zip(f).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum();
    let tv: f64 = x.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    fit + alpha * tv
}

/// Minimum of sum-of-segment-errors + gamma * jumps over all 2^(n-1) jump
/// configurations, with `eps(l, r)` the inclusive 0-based segment error.
/// Returns (energy, jump boundary indices).
pub fn exhaustive_jump_search(
    n: usize,
    gamma: f64,
    mut eps: impl FnMut(usize, usize) -> f64,
) -> (f64, Vec<usize>) {
    assert!(n >= 1 && n <= 20, "mask enumeration oracle is for desk sizes");
    let mut table = vec![vec![0.0; n]; n];
    for l in 0..n {
        for r in l..n {
            table[l][r] = eps(l, r);
        }
    }
    let mut best = f64::INFINITY;
    let mut best_jumps = Vec::new();
    for mask in 0u64..1u64 << (n - 1) {
        let mut e = 0.0;
        let mut jumps = Vec::new();
        let mut l = 0usize;
        for i in 0..n - 1 {
            if mask >> i & 1 == 1 {
                e += table[l][i] + gamma;
                jumps.push(i);
                l = i + 1;
            }
        }
        e += table[l][n - 1];
        if e < best {
            best = e;
            best_jumps = jumps;
        }
    }
    (best, best_jumps)
}
