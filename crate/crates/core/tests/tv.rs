//! First-order models: pinned energy values, atom splitting structure,
//! drivers against exact/convex oracles, gauge invariance, and gradient
//! checks against finite differences.

mod common;

use std::f64::consts::PI;

use common::{fd_gradient, random_point, random_tangent, rng, tv1d_l2_energy, tv1d_l2_oracle};
use mvr_core::atoms::Atom;
use mvr_core::solver::{MeanMode, SolverSchedule};
use mvr_core::tv::{
    denoise_h1, denoise_huber, denoise_tv, pairwise_energy, tv_atoms, tv_energy_1d, tv_energy_2d,
    PairPenalty, TVModel, TvEngine,
};
use mvr_core::{Manifold, Signal, SignalShape};
use rand::Rng;

fn scalar_signal(values: &[f64]) -> Signal {
    Signal::from_coords(Manifold::Euclidean(1), SignalShape::One(values.len()), values.to_vec())
        .unwrap()
}

fn model(alpha: f64, q: f64, p: f64) -> TVModel {
    TVModel { alpha, q, p, diagonal_differences: false }
}

fn random_signal(m: &Manifold, shape: SignalShape, scale: f64, seed: u64) -> Signal {
    let mut r = rng(seed);
    let mut coords = Vec::new();
    let mut here = random_point(m, &mut r);
    for _ in 0..shape.len() {
        here = m.exp(&here, &random_tangent(m, &here, r.random_range(0.0..scale), &mut r));
        coords.extend_from_slice(&here);
    }
    Signal::from_coords(m.clone(), shape, coords).unwrap()
}

#[test]
fn pinned_energy_values() {
    let x = scalar_signal(&[0.0, 1.0]);
    let f = scalar_signal(&[0.0, 0.0]);
    assert!((tv_energy_1d(&x, &f, &model(1.0, 2.0, 1.0)).unwrap() - 1.5).abs() < 1e-12);
    assert_eq!(tv_energy_1d(&f, &f, &model(1.0, 2.0, 1.0)).unwrap(), 0.0);

    // The angle 3π/2 in canonical [-π, π) form; the wrapped gap to 0 is π/2.
    let c = Signal::from_coords(Manifold::Circle, SignalShape::One(2), vec![0.0, -PI / 2.0]).unwrap();
    let e = tv_energy_1d(&c, &c, &model(1.0, 2.0, 1.0)).unwrap();
    assert!((e - PI / 2.0).abs() < 1e-12, "wrapped difference should be π/2, got {e}");
}

#[test]
fn checkerboard_image_energies() {
    let board = Signal::from_coords(
        Manifold::Euclidean(1),
        SignalShape::Two(2, 2),
        vec![0.0, 1.0, 1.0, 0.0],
    )
    .unwrap();
    let e1 = tv_energy_2d(&board, &board, &model(1.0, 2.0, 1.0)).unwrap();
    assert!((e1 - 4.0).abs() < 1e-12, "four unit differences, got {e1}");
    // Pixel (0,0) couples two unit differences; (0,1) and (1,0) each carry
    // one uncoupled unit difference.
    let e2 = tv_energy_2d(&board, &board, &model(1.0, 2.0, 2.0)).unwrap();
    assert!((e2 - (2.0 + 2.0_f64.sqrt())).abs() < 1e-12, "got {e2}");
}

#[test]
fn univariate_split_covers_the_stated_pairs() {
    let f = scalar_signal(&[0.0, 1.0, 2.0, 3.0]);
    let atoms = tv_atoms(&f, &model(1.0, 2.0, 1.0)).unwrap();
    assert_eq!(atoms.len(), 3);
    assert_eq!(atoms[0].footprint(), vec![0, 1, 2, 3]);
    assert_eq!(atoms[1].footprint(), vec![0, 1, 2, 3], "even atom: pairs (0,1) and (2,3)");
    assert_eq!(atoms[2].footprint(), vec![1, 2], "odd atom: pair (1,2)");
}

#[test]
fn image_split_has_disjoint_footprints_inside_each_atom() {
    for diagonals in [false, true] {
        let f = random_signal(&Manifold::Sphere(2), SignalShape::Two(3, 3), 0.3, 51);
        let m = TVModel { diagonal_differences: diagonals, ..model(1.0, 2.0, 1.0) };
        let atoms = tv_atoms(&f, &m).unwrap();
        assert_eq!(atoms.len(), if diagonals { 9 } else { 5 });
        for (k, atom) in atoms.iter().enumerate().skip(1) {
            let fp = atom.footprint();
            let mut seen = std::collections::HashSet::new();
            for i in &fp {
                assert!(seen.insert(*i), "atom {k} touches sample {i} twice");
            }
        }
    }
}

#[test]
fn atom_evaluations_sum_to_the_energy() {
    for m in [Manifold::Circle, Manifold::Sphere(2), Manifold::Spd(2)] {
        let f = random_signal(&m, SignalShape::One(9), 0.4, 52);
        let x = random_signal(&m, SignalShape::One(9), 0.4, 53);
        let tvm = model(0.7, 2.0, 1.0);
        let total: f64 = tv_atoms(&f, &tvm).unwrap().iter().map(|a| a.evaluate(&x)).sum();
        let energy = tv_energy_1d(&x, &f, &tvm).unwrap();
        assert!((total - energy).abs() < 1e-10, "1-D mismatch on {}: {total} vs {energy}", m.name());

        for diagonals in [false, true] {
            for p in [1.0, 2.0] {
                if diagonals && p == 2.0 {
                    continue;
                }
                let f = random_signal(&m, SignalShape::Two(4, 3), 0.4, 54);
                let x = random_signal(&m, SignalShape::Two(4, 3), 0.4, 55);
                let tvm = TVModel { diagonal_differences: diagonals, ..model(0.7, 1.0, p) };
                let total: f64 =
                    tv_atoms(&f, &tvm).unwrap().iter().map(|a| a.evaluate(&x)).sum();
                let energy = tv_energy_2d(&x, &f, &tvm).unwrap();
                assert!(
                    (total - energy).abs() < 1e-10,
                    "2-D mismatch on {} (p={p}, diag={diagonals}): {total} vs {energy}",
                    m.name()
                );
            }
        }
    }
}

#[test]
fn zero_alpha_returns_the_data() {
    let f = random_signal(&Manifold::Sphere(2), SignalShape::One(6), 0.5, 56);
    let out = denoise_tv(
        &f,
        &model(0.0, 2.0, 1.0),
        TvEngine::Cppa,
        &SolverSchedule { max_iters: 20, ..Default::default() },
    )
    .unwrap();
    assert_eq!(out.signal.data(), f.data());
}

#[test]
fn huge_alpha_flattens_to_the_mean() {
    let vals = [0.1, 0.9, 0.4, 0.6, 0.25, 0.75];
    let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
    let f = scalar_signal(&vals);
    let sched = SolverSchedule { lambda0: 2.0, max_iters: 4000, tol: 0.0, ..Default::default() };
    let out = denoise_tv(&f, &model(1e6, 2.0, 1.0), TvEngine::Cppa, &sched).unwrap();
    for v in out.signal.data() {
        assert!((v - mean).abs() <= 1e-3, "expected ≈{mean}, got {v}");
    }
}

#[test]
fn cppa_and_pppa_match_the_exact_scalar_oracle() {
    let mut r = rng(57);
    let f_vals: Vec<f64> = (0..16)
        .map(|i| if i < 8 { 0.0 } else { 1.0 } + r.random_range(-0.2..0.2))
        .collect();
    let alpha = 0.3;
    let oracle = tv1d_l2_oracle(&f_vals, alpha);
    let target = tv1d_l2_energy(&oracle, &f_vals, alpha);
    let f = scalar_signal(&f_vals);
    let tvm = model(alpha, 2.0, 1.0);

    let sched = SolverSchedule { lambda0: 2.0, max_iters: 10_000, tol: 0.0, ..Default::default() };
    let out = denoise_tv(&f, &tvm, TvEngine::Cppa, &sched).unwrap();
    let e = tv1d_l2_energy(out.signal.data(), &f_vals, alpha);
    assert!(e <= target * 1.005, "cppa {e} vs oracle {target}");

    let sched = SolverSchedule { lambda0: 4.0, max_iters: 10_000, tol: 0.0, ..Default::default() };
    let out = denoise_tv(&f, &tvm, TvEngine::Pppa(MeanMode::Exact), &sched).unwrap();
    let e = tv1d_l2_energy(out.signal.data(), &f_vals, alpha);
    assert!(e <= target * 1.01, "pppa {e} vs oracle {target}");

    // Denoising a mildly noisy step must keep the jump where it was.
    let jump: usize = out
        .signal
        .data()
        .windows(2)
        .enumerate()
        .max_by(|a, b| {
            let da = (a.1[1] - a.1[0]).abs();
            let db = (b.1[1] - b.1[0]).abs();
            da.partial_cmp(&db).unwrap()
        })
        .map(|(i, _)| i)
        .unwrap();
    assert_eq!(jump, 7, "jump must stay between samples 7 and 8");
}

#[test]
fn denoising_commutes_with_global_isometries() {
    // Circle: rotation by a constant angle.
    let mut r = rng(58);
    let base: Vec<f64> = (0..8).map(|_| r.random_range(-2.0..2.0)).collect();
    let f = Signal::from_coords(Manifold::Circle, SignalShape::One(8), base.clone()).unwrap();
    let shift = 1.1;
    let wrap = |t: f64| (t + PI).rem_euclid(2.0 * PI) - PI;
    let shifted = Signal::from_coords(
        Manifold::Circle,
        SignalShape::One(8),
        base.iter().map(|t| wrap(t + shift)).collect(),
    )
    .unwrap();
    let tvm = model(0.4, 2.0, 1.0);
    let sched = SolverSchedule { lambda0: 1.0, max_iters: 400, tol: 0.0, ..Default::default() };
    let a = denoise_tv(&f, &tvm, TvEngine::Cppa, &sched).unwrap();
    let b = denoise_tv(&shifted, &tvm, TvEngine::Cppa, &sched).unwrap();
    for (x, y) in a.signal.data().iter().zip(b.signal.data()) {
        assert!((wrap(x + shift) - y).abs() < 1e-9, "circle shift does not commute");
    }
    let ea = tv_energy_1d(&a.signal, &f, &tvm).unwrap();
    let eb = tv_energy_1d(&b.signal, &shifted, &tvm).unwrap();
    assert!((ea - eb).abs() < 1e-9);

    // Sphere: a fixed rotation matrix applied to every sample.
    let m = Manifold::Sphere(2);
    let f = random_signal(&m, SignalShape::One(7), 0.4, 59);
    let (c, s) = (0.6_f64, 0.8_f64);
    let rot = |p: &[f64]| vec![c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]];
    let rotated = Signal::from_coords(
        m.clone(),
        SignalShape::One(7),
        f.iter_points().flat_map(|p| rot(p)).collect(),
    )
    .unwrap();
    let a = denoise_tv(&f, &tvm, TvEngine::Cppa, &sched).unwrap();
    let b = denoise_tv(&rotated, &tvm, TvEngine::Cppa, &sched).unwrap();
    for (p, q) in a.signal.iter_points().zip(b.signal.iter_points()) {
        let rp = rot(p);
        let d = m.dist(&rp, q);
        assert!(d < 1e-9, "sphere rotation does not commute (moved {d})");
    }
}

#[test]
fn cppa_energy_trace_is_monotone_on_hadamard_instances() {
    let m = Manifold::Spd(3);
    let f = random_signal(&m, SignalShape::One(6), 0.5, 60);
    let tvm = model(0.5, 2.0, 1.0);
    let sched = SolverSchedule { lambda0: 1.0, max_iters: 150, tol: 0.0, ..Default::default() };
    let out = denoise_tv(&f, &tvm, TvEngine::Cppa, &sched).unwrap();
    for w in out.trace.windows(2) {
        assert!(
            w[1].total <= w[0].total + 1e-7,
            "energy went up between cycles {} and {}: {} -> {}",
            w[0].iteration,
            w[1].iteration,
            w[0].total,
            w[1].total
        );
    }
}

#[test]
fn data_atom_gradient_matches_finite_differences() {
    let mut r = rng(61);
    for m in [Manifold::Sphere(2), Manifold::Spd(2), Manifold::Circle] {
        for q in [1.0, 2.0] {
            let f = random_signal(&m, SignalShape::One(3), 0.5, 62);
            let u = random_signal(&m, SignalShape::One(3), 0.5, 63 + q as u64);
            let atoms = tv_atoms(&f, &model(0.3, q, 1.0)).unwrap();
            let data_atom = &atoms[0];
            let grads = data_atom.grad(&u).unwrap();
            let pick = r.random_range(0..3);
            let (_, g) = &grads[pick];
            let obj = |p: &[f64]| -> f64 {
                let mut probe = u.clone();
                probe.set_point(pick, p);
                data_atom.evaluate(&probe)
            };
            let fd = fd_gradient(&m, &obj, u.point(pick), 1e-6);
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() < 1e-5, "{}: q={q} grad {a} vs fd {b}", m.name());
            }
        }
    }
}

#[test]
fn isotropic_coupling_gradient_matches_finite_differences() {
    let m = Manifold::Sphere(2);
    let u = random_signal(&m, SignalShape::Two(3, 3), 0.3, 64);
    let f = u.clone();
    let atoms = tv_atoms(&f, &model(0.8, 2.0, 2.0)).unwrap();
    assert_eq!(atoms.len(), 2, "p=2 image split is data + one coupling atom");
    let iso = &atoms[1];
    let grads = iso.grad(&u).unwrap();
    for pick in [0usize, 4, 8, 5] {
        let (_, g) = &grads[pick];
        let obj = |p: &[f64]| -> f64 {
            let mut probe = u.clone();
            probe.set_point(pick, p);
            iso.evaluate(&probe)
        };
        let fd = fd_gradient(&m, &obj, u.point(pick), 1e-6);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-5, "pixel {pick}: grad {a} vs fd {b}");
        }
    }
}

#[test]
fn p2_image_driver_reduces_energy_from_the_start() {
    let f = random_signal(&Manifold::Sphere(2), SignalShape::Two(4, 4), 0.35, 65);
    let sched = SolverSchedule { lambda0: 0.5, max_iters: 200, tol: 0.0, ..Default::default() };
    let out = denoise_tv(&f, &model(0.3, 2.0, 2.0), TvEngine::Cppa, &sched).unwrap();
    let first = out.trace[0].total;
    let best = out.trace.iter().map(|r| r.total).fold(f64::INFINITY, f64::min);
    assert!(best < first, "subgradient fallback never improved the energy");
}

/// Exact 1-D H¹ oracle: (I + αL)x = f with L the path-graph Laplacian,
/// solved by the Thomas algorithm.
fn h1_oracle(f: &[f64], alpha: f64) -> Vec<f64> {
    let n = f.len();
    let mut a = vec![0.0; n]; // sub-diagonal
    let mut b = vec![0.0; n]; // diagonal
    let mut c = vec![0.0; n]; // super-diagonal
    for i in 0..n {
        let degree = if i == 0 || i == n - 1 { 1.0 } else { 2.0 };
        b[i] = 1.0 + alpha * degree;
        if i > 0 {
            a[i] = -alpha;
        }
        if i + 1 < n {
            c[i] = -alpha;
        }
    }
    let mut d = f.to_vec();
    for i in 1..n {
        let w = a[i] / b[i - 1];
        b[i] -= w * c[i - 1];
        d[i] -= w * d[i - 1];
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1] / b[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = (d[i] - c[i] * x[i + 1]) / b[i];
    }
    x
}

fn h1_energy(x: &[f64], f: &[f64], alpha: f64) -> f64 {
    let fit: f64 = x.iter().zip(f).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum();
    let reg: f64 = x.windows(2).map(|w| 0.5 * (w[1] - w[0]) * (w[1] - w[0])).sum();
    fit + alpha * reg
}

#[test]
fn h1_driver_matches_the_tridiagonal_solve() {
    let mut r = rng(66);
    let f_vals: Vec<f64> = (0..14).map(|_| r.random_range(-1.0..1.0)).collect();
    let alpha = 0.8;
    let oracle = h1_oracle(&f_vals, alpha);
    let target = h1_energy(&oracle, &f_vals, alpha);
    let f = scalar_signal(&f_vals);
    let tvm = model(alpha, 2.0, 1.0);
    let sched = SolverSchedule { lambda0: 2.0, max_iters: 8000, tol: 0.0, ..Default::default() };
    let out = denoise_h1(&f, &tvm, TvEngine::Cppa, &sched).unwrap();
    let e = h1_energy(out.signal.data(), &f_vals, alpha);
    assert!(e <= target * 1.005, "h1 driver {e} vs oracle {target}");
    let via_model = pairwise_energy(&out.signal, &f, &tvm, PairPenalty::Quadratic).unwrap();
    assert!((via_model - e).abs() < 1e-10, "energy helper disagrees with scalar reference");
}

/// High-precision gradient-descent oracle for the smooth Huber-TV model.
fn huber_tv_oracle(f: &[f64], alpha: f64, omega: f64, tau: f64) -> Vec<f64> {
    let n = f.len();
    let hprime = |s: f64| -> f64 {
        if s.abs() <= tau {
            omega * s / tau
        } else {
            omega * s.signum()
        }
    };
    let mut x = f.to_vec();
    let lips = 1.0 + 4.0 * alpha * omega / tau;
    let step = 1.0 / lips;
    for _ in 0..300_000 {
        let mut g = vec![0.0; n];
        for i in 0..n {
            g[i] = x[i] - f[i];
        }
        for i in 0..n - 1 {
            let d = hprime(x[i + 1] - x[i]);
            g[i] -= alpha * d;
            g[i + 1] += alpha * d;
        }
        let mut biggest = 0.0_f64;
        for i in 0..n {
            x[i] -= step * g[i];
            biggest = biggest.max(g[i].abs());
        }
        if biggest < 1e-14 {
            break;
        }
    }
    x
}

fn huber_tv_energy(x: &[f64], f: &[f64], alpha: f64, omega: f64, tau: f64) -> f64 {
    let h = |s: f64| {
        let s = s.abs();
        if s <= tau { omega * s * s / (2.0 * tau) } else { omega * s - omega * tau / 2.0 }
    };
    let fit: f64 = x.iter().zip(f).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum();
    let reg: f64 = x.windows(2).map(|w| h(w[1] - w[0])).sum();
    fit + alpha * reg
}

#[test]
fn huber_driver_matches_the_smooth_descent_oracle() {
    let mut r = rng(67);
    let f_vals: Vec<f64> = (0..12)
        .map(|i| if i < 6 { 0.0 } else { 1.0 } + r.random_range(-0.15..0.15))
        .collect();
    let (alpha, omega, tau) = (0.5, 1.0, 0.25);
    let oracle = huber_tv_oracle(&f_vals, alpha, omega, tau);
    let target = huber_tv_energy(&oracle, &f_vals, alpha, omega, tau);
    let f = scalar_signal(&f_vals);
    let sched = SolverSchedule { lambda0: 2.0, max_iters: 8000, tol: 0.0, ..Default::default() };
    let out = denoise_huber(&f, &model(alpha, 2.0, 1.0), omega, tau, TvEngine::Cppa, &sched).unwrap();
    let e = huber_tv_energy(out.signal.data(), &f_vals, alpha, omega, tau);
    assert!(e <= target * 1.005, "huber driver {e} vs oracle {target}");
}

#[test]
fn model_validation_rejects_bad_exponents() {
    let f = scalar_signal(&[0.0, 1.0]);
    assert!(tv_energy_1d(&f, &f, &model(1.0, 3.0, 1.0)).is_err());
    assert!(tv_energy_1d(&f, &f, &model(1.0, 2.0, 3.0)).is_err());
    let g = scalar_signal(&[0.0, 1.0, 2.0]);
    assert!(tv_energy_1d(&g, &f, &model(1.0, 2.0, 1.0)).is_err(), "length mismatch must error");
}
