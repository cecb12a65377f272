//! Solver engines driven by small hand-rolled test atoms, checked against an
//! exact scalar TV oracle, closed-form fixed points, and each other. The
//! atoms here are deliberately minimal re-derivations (plain arithmetic on
//! Euclidean samples where possible) so the engines are validated
//! independently of the library's model builders.

mod common;

use common::{random_point, random_tangent, rng, tv1d_l2_energy, tv1d_l2_oracle};
use mvr_core::atoms::{Atom, AtomKind, AtomRole};
use mvr_core::solver::{
    cppa, fbs, fbs_traj, pppa, subgradient_descent, traj_step, MeanMode, SolverSchedule,
    SweepOrder,
};
use mvr_core::{Manifold, MvrError, Signal, SignalShape};
use rand::Rng;

/// ½ (u_i − f)² on a scalar Euclidean signal; prox and gradient are the
/// textbook closed forms, written out without using the library prox.
struct ScalarQuad {
    i: usize,
    f: f64,
}

impl Atom for ScalarQuad {
    fn role(&self) -> AtomRole {
        AtomRole::Data
    }
    fn kind(&self) -> AtomKind {
        AtomKind::Both
    }
    fn footprint(&self) -> Vec<usize> {
        vec![self.i]
    }
    fn evaluate(&self, u: &Signal) -> f64 {
        let d = u.point(self.i)[0] - self.f;
        0.5 * d * d
    }
    fn prox(&self, u: &mut Signal, lambda: f64) -> mvr_core::Result<()> {
        let x = u.point(self.i)[0];
        u.point_mut(self.i)[0] = (x + lambda * self.f) / (1.0 + lambda);
        Ok(())
    }
    fn grad(&self, u: &Signal) -> mvr_core::Result<Vec<(usize, Vec<f64>)>> {
        Ok(vec![(self.i, vec![u.point(self.i)[0] - self.f])])
    }
}

/// α |u_j − u_i| on a scalar Euclidean signal with the symmetric shrink prox.
struct ScalarAbsPair {
    i: usize,
    j: usize,
    alpha: f64,
}

impl Atom for ScalarAbsPair {
    fn role(&self) -> AtomRole {
        AtomRole::Regularizer
    }
    fn kind(&self) -> AtomKind {
        AtomKind::Proximable
    }
    fn footprint(&self) -> Vec<usize> {
        vec![self.i, self.j]
    }
    fn evaluate(&self, u: &Signal) -> f64 {
        self.alpha * (u.point(self.j)[0] - u.point(self.i)[0]).abs()
    }
    fn prox(&self, u: &mut Signal, lambda: f64) -> mvr_core::Result<()> {
        let a = u.point(self.i)[0];
        let b = u.point(self.j)[0];
        let d = (b - a).abs();
        if d == 0.0 {
            return Ok(());
        }
        let s = (lambda * self.alpha).min(0.5 * d);
        let dir = (b - a).signum();
        u.point_mut(self.i)[0] = a + s * dir;
        u.point_mut(self.j)[0] = b - s * dir;
        Ok(())
    }
}

/// ½ d(u_0, p)² on an arbitrary manifold, gradient only.
struct DistSq {
    p: Vec<f64>,
}

impl Atom for DistSq {
    fn role(&self) -> AtomRole {
        AtomRole::Data
    }
    fn kind(&self) -> AtomKind {
        AtomKind::Differentiable
    }
    fn footprint(&self) -> Vec<usize> {
        vec![0]
    }
    fn evaluate(&self, u: &Signal) -> f64 {
        let d = u.manifold.dist(u.point(0), &self.p);
        0.5 * d * d
    }
    fn grad(&self, u: &Signal) -> mvr_core::Result<Vec<(usize, Vec<f64>)>> {
        let l = u.manifold.log(u.point(0), &self.p).value;
        Ok(vec![(0, l.iter().map(|c| -c).collect())])
    }
}

/// Identically zero; prox and gradient do nothing.
struct ZeroAtom;

impl Atom for ZeroAtom {
    fn role(&self) -> AtomRole {
        AtomRole::Regularizer
    }
    fn kind(&self) -> AtomKind {
        AtomKind::Both
    }
    fn footprint(&self) -> Vec<usize> {
        vec![]
    }
    fn evaluate(&self, _u: &Signal) -> f64 {
        0.0
    }
    fn prox(&self, _u: &mut Signal, _lambda: f64) -> mvr_core::Result<()> {
        Ok(())
    }
    fn grad(&self, _u: &Signal) -> mvr_core::Result<Vec<(usize, Vec<f64>)>> {
        Ok(vec![])
    }
}

fn scalar_signal(values: &[f64]) -> Signal {
    Signal::from_coords(
        Manifold::Euclidean(1),
        SignalShape::One(values.len()),
        values.to_vec(),
    )
    .unwrap()
}

fn tv_atoms(f: &[f64], alpha: f64) -> Vec<Box<dyn Atom>> {
    let mut atoms: Vec<Box<dyn Atom>> = Vec::new();
    for (i, v) in f.iter().enumerate() {
        atoms.push(Box::new(ScalarQuad { i, f: *v }));
    }
    for i in 0..f.len() - 1 {
        atoms.push(Box::new(ScalarAbsPair { i, j: i + 1, alpha }));
    }
    atoms
}

fn noisy_step_signal(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| if i < n / 2 { 0.0 } else { 1.0 } + r.random_range(-0.25..0.25))
        .collect()
}

#[test]
fn cppa_matches_exact_scalar_tv_oracle_within_half_percent() {
    let f = noisy_step_signal(16, 41);
    let alpha = 0.4;
    let oracle = tv1d_l2_oracle(&f, alpha);
    let target = tv1d_l2_energy(&oracle, &f, alpha);

    let sched = SolverSchedule { lambda0: 2.0, max_iters: 10_000, tol: 0.0, ..Default::default() };
    let out = cppa(&tv_atoms(&f, alpha), &scalar_signal(&f), &sched).unwrap();
    let energy = tv1d_l2_energy(out.signal.data(), &f, alpha);
    assert!(
        energy <= target * 1.005,
        "cppa energy {energy} vs oracle {target}"
    );
    assert_eq!(out.trace.len(), 10_001, "trace must include row 0 and every cycle");
    assert!((out.trace.last().unwrap().total - energy).abs() < 1e-12);
}

#[test]
fn pppa_matches_exact_scalar_tv_oracle_and_modes_agree_on_flat_space() {
    let f = noisy_step_signal(12, 42);
    let alpha = 0.3;
    let oracle = tv1d_l2_oracle(&f, alpha);
    let target = tv1d_l2_energy(&oracle, &f, alpha);

    let sched = SolverSchedule { lambda0: 4.0, max_iters: 20_000, tol: 0.0, ..Default::default() };
    let x0 = scalar_signal(&f);
    let atoms = tv_atoms(&f, alpha);
    let exact = pppa(&atoms, &x0, &sched, MeanMode::Exact).unwrap();
    let energy = tv1d_l2_energy(exact.signal.data(), &f, alpha);
    assert!(
        energy <= target * 1.01,
        "pppa energy {energy} vs oracle {target}"
    );

    let quick = SolverSchedule { lambda0: 4.0, max_iters: 50, tol: 0.0, ..Default::default() };
    let a = pppa(&atoms, &x0, &quick, MeanMode::Exact).unwrap();
    let b = pppa(&atoms, &x0, &quick, MeanMode::Approx).unwrap();
    for (x, y) in a.signal.data().iter().zip(b.signal.data()) {
        assert!((x - y).abs() < 1e-9, "mean modes disagree on flat space: {x} vs {y}");
    }
}

#[test]
fn pppa_with_identical_atoms_returns_the_common_prox_output() {
    let x0 = scalar_signal(&[0.0]);
    let atoms: Vec<Box<dyn Atom>> = (0..3).map(|_| Box::new(ScalarQuad { i: 0, f: 2.0 }) as _).collect();
    let sched = SolverSchedule { lambda0: 1.0, max_iters: 1, tol: 0.0, ..Default::default() };
    let out = pppa(&atoms, &x0, &sched, MeanMode::Exact).unwrap();
    // Each candidate is prox(0 → 2, λ=1) = 1; the mean of identical points is that point.
    assert!((out.signal.data()[0] - 1.0).abs() < 1e-12);
}

#[test]
fn zero_step_size_returns_the_start_unchanged() {
    let f = noisy_step_signal(8, 43);
    let x0 = scalar_signal(&f);
    let sched = SolverSchedule { lambda0: 0.0, max_iters: 50, tol: 1e-8, ..Default::default() };
    let out = cppa(&tv_atoms(&f, 0.5), &x0, &sched).unwrap();
    assert_eq!(out.signal.data(), x0.data(), "zero step must leave the input untouched");
    assert_eq!(out.trace.len(), 2, "zero movement must trip the stopping rule after one cycle");
}

#[test]
fn engines_reject_empty_atom_lists_and_bad_schedules() {
    let x0 = scalar_signal(&[0.0]);
    assert!(matches!(
        cppa(&[], &x0, &SolverSchedule::default()),
        Err(MvrError::InvalidArgument(_))
    ));
    let bad = SolverSchedule { decay: 0.4, ..Default::default() };
    assert!(matches!(
        cppa(&tv_atoms(&[0.0, 1.0], 0.1), &x0, &bad),
        Err(MvrError::InvalidArgument(_))
    ));
    // A gradient-only atom cannot be used by a prox engine and vice versa.
    let grad_only: Vec<Box<dyn Atom>> = vec![Box::new(DistSq { p: vec![0.0] })];
    assert!(cppa(&grad_only, &x0, &SolverSchedule::default()).is_err());
    let prox_only: Vec<Box<dyn Atom>> = vec![Box::new(ScalarAbsPair { i: 0, j: 0, alpha: 1.0 })];
    assert!(subgradient_descent(&prox_only, &x0, &SolverSchedule::default()).is_err());
}

#[test]
fn subgradient_descent_reaches_the_sphere_target() {
    let m = Manifold::Sphere(2);
    let mut r = rng(44);
    let p = random_point(&m, &mut r);
    let x0coords = m.exp(&p, &random_tangent(&m, &p, 1.3, &mut r));
    let x0 = Signal::from_coords(m.clone(), SignalShape::One(1), x0coords).unwrap();
    let atoms: Vec<Box<dyn Atom>> = vec![Box::new(DistSq { p: p.clone() })];
    let sched = SolverSchedule { lambda0: 1.0, max_iters: 200, tol: 0.0, ..Default::default() };
    let out = subgradient_descent(&atoms, &x0, &sched).unwrap();
    assert!(
        m.dist(out.signal.point(0), &p) < 1e-5,
        "descent stopped {} away from the minimizer",
        m.dist(out.signal.point(0), &p)
    );
}

#[test]
fn subgradient_descent_on_zero_objective_keeps_the_start() {
    let x0 = scalar_signal(&[0.7, -0.2]);
    let atoms: Vec<Box<dyn Atom>> = vec![Box::new(ZeroAtom)];
    let out = subgradient_descent(&atoms, &x0, &SolverSchedule::default()).unwrap();
    assert_eq!(out.signal.data(), x0.data());
}

#[test]
fn subgradient_descent_returns_the_best_iterate_not_the_last() {
    // A huge constant step makes the iterate overshoot and oscillate; the
    // returned point must be the best one visited, not the final state.
    let x0 = scalar_signal(&[4.0]);
    let atoms: Vec<Box<dyn Atom>> = vec![Box::new(ScalarQuad { i: 0, f: 0.0 })];
    let sched =
        SolverSchedule { lambda0: 1.9, decay: 0.51, max_iters: 7, tol: 0.0, ..Default::default() };
    let out = subgradient_descent(&atoms, &x0, &sched).unwrap();
    let best_in_trace =
        out.trace.iter().map(|r| r.total).fold(f64::INFINITY, f64::min);
    let returned = 0.5 * out.signal.data()[0] * out.signal.data()[0];
    assert!((returned - best_in_trace).abs() < 1e-12);
}

#[test]
fn fbs_matches_exact_scalar_tv_oracle() {
    let f = noisy_step_signal(16, 45);
    let alpha = 0.35;
    let oracle = tv1d_l2_oracle(&f, alpha);
    let target = tv1d_l2_energy(&oracle, &f, alpha);

    let data: Vec<Box<dyn Atom>> =
        f.iter().enumerate().map(|(i, v)| Box::new(ScalarQuad { i, f: *v }) as _).collect();
    let reg: Vec<Box<dyn Atom>> =
        (0..f.len() - 1).map(|i| Box::new(ScalarAbsPair { i, j: i + 1, alpha }) as _).collect();
    let sched = SolverSchedule { lambda0: 1.0, max_iters: 10_000, tol: 0.0, ..Default::default() };
    let out = fbs(&data, &reg, &scalar_signal(&f), &sched).unwrap();
    let energy = tv1d_l2_energy(out.signal.data(), &f, alpha);
    assert!(energy <= target * 1.005, "fbs energy {energy} vs oracle {target}");
}

#[test]
fn fbs_traj_never_ends_above_its_starting_energy() {
    let f = noisy_step_signal(12, 46);
    let alpha = 0.45;
    let data: Vec<Box<dyn Atom>> =
        f.iter().enumerate().map(|(i, v)| Box::new(ScalarQuad { i, f: *v }) as _).collect();
    let reg: Vec<Box<dyn Atom>> =
        (0..f.len() - 1).map(|i| Box::new(ScalarAbsPair { i, j: i + 1, alpha }) as _).collect();
    let sched = SolverSchedule { lambda0: 0.8, max_iters: 300, tol: 0.0, ..Default::default() };
    let x0 = scalar_signal(&noisy_step_signal(12, 47));
    let out = fbs_traj(&data, &reg, &x0, &sched).unwrap();
    assert!(out.trace.last().unwrap().total <= out.trace[0].total + 1e-12);

    let oracle = tv1d_l2_oracle(&f, alpha);
    let target = tv1d_l2_energy(&oracle, &f, alpha);
    let energy = tv1d_l2_energy(out.signal.data(), &f, alpha);
    assert!(energy <= target * 1.02, "fbs_traj energy {energy} vs oracle {target}");
}

#[test]
fn traj_step_consumes_budget_and_leaves_zero_gradients_alone() {
    let mut u = scalar_signal(&[3.0]);
    let atom = ScalarQuad { i: 0, f: 0.0 };
    let before = atom.evaluate(&u);
    let spent = traj_step(&atom, &mut u, 0.5).unwrap();
    assert!(atom.evaluate(&u) < before, "descent must reduce the objective");
    assert!(spent > 0.0 && spent <= 0.5 + 1e-12);

    let mut at_min = scalar_signal(&[0.0]);
    let spent = traj_step(&atom, &mut at_min, 0.5).unwrap();
    assert_eq!(spent, 0.0);
    assert_eq!(at_min.data(), &[0.0]);
}

#[test]
fn shuffled_sweeps_are_bitwise_reproducible_for_a_fixed_seed() {
    let f = noisy_step_signal(10, 48);
    let atoms = tv_atoms(&f, 0.5);
    let x0 = scalar_signal(&f);
    let sched = SolverSchedule {
        lambda0: 1.5,
        max_iters: 60,
        tol: 0.0,
        rng_seed: 7,
        order: SweepOrder::Shuffled,
        ..Default::default()
    };
    let a = cppa(&atoms, &x0, &sched).unwrap();
    let b = cppa(&atoms, &x0, &sched).unwrap();
    assert_eq!(a.signal.data(), b.signal.data(), "same seed must reproduce bitwise");
    for (ra, rb) in a.trace.iter().zip(&b.trace) {
        assert_eq!(ra.total.to_bits(), rb.total.to_bits());
    }

    let other = SolverSchedule { rng_seed: 8, ..sched };
    let c = cppa(&atoms, &x0, &other).unwrap();
    assert_ne!(
        a.signal.data(),
        c.signal.data(),
        "different shuffle seeds should take different sweep paths"
    );
}

#[test]
fn stopping_rule_halts_on_stationary_iterates() {
    // Data already at the fixed point of every atom: first cycle moves
    // nothing, so the relative-change rule must stop immediately.
    let f = [1.0, 1.0, 1.0];
    let atoms = tv_atoms(&f, 0.2);
    let x0 = scalar_signal(&f);
    let sched = SolverSchedule { lambda0: 1.0, max_iters: 500, tol: 1e-10, ..Default::default() };
    let out = cppa(&atoms, &x0, &sched).unwrap();
    assert_eq!(out.trace.len(), 2);
    assert_eq!(out.signal.data(), x0.data());
}
