//! Solver engines for split objectives over manifold-valued signals:
//! cyclic and parallel proximal point (CPPA/PPPA), subgradient descent, and
//! forward-backward splitting with either a Jacobi gradient step or
//! trajectory-following cyclic sweeps.
//!
//! All engines share one schedule type. With a fixed seed and fixed sweep
//! order every engine is bitwise deterministic; parallelism is only used
//! where writes land in disjoint slots and reductions keep a fixed order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::atoms::{atom_refs, evaluate_energy, Atom};
use crate::error::{MvrError, Result};
use crate::signal::Signal;
use crate::stats::{karcher_mean_coords, mean_approx_coords, mean_schedule};

/// Step-size and termination policy. The step in cycle k (1-based) is
/// `lambda0 / k^decay`; `decay` must lie in (1/2, 1] so the sequence is
/// square-summable but not summable.
#[derive(Clone, Debug)]
pub struct SolverSchedule {
    pub lambda0: f64,
    pub decay: f64,
    pub max_iters: usize,
    /// Relative-change stopping threshold.
    pub tol: f64,
    pub rng_seed: u64,
    pub order: SweepOrder,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepOrder {
    Fixed,
    Shuffled,
}

impl Default for SolverSchedule {
    fn default() -> Self {
        SolverSchedule {
            lambda0: 1.0,
            decay: 1.0,
            max_iters: 500,
            tol: 1e-8,
            rng_seed: 0,
            order: SweepOrder::Fixed,
        }
    }
}

impl SolverSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda0 >= 0.0) {
            return Err(MvrError::InvalidArgument(format!(
                "lambda0 must be nonnegative, got {}",
                self.lambda0
            )));
        }
        if !(self.decay > 0.5 && self.decay <= 1.0) {
            return Err(MvrError::InvalidArgument(format!(
                "decay must lie in (1/2, 1], got {}",
                self.decay
            )));
        }
        if !(self.tol >= 0.0) {
            return Err(MvrError::InvalidArgument("tol must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn step(&self, k: usize) -> f64 {
        self.lambda0 / (k as f64).powf(self.decay)
    }
}

/// One row of the per-cycle energy trace. Row 0 records the initial point.
#[derive(Clone, Copy, Debug)]
pub struct TraceRow {
    pub iteration: usize,
    pub data: f64,
    pub reg: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct SolverOutput {
    pub signal: Signal,
    pub trace: Vec<TraceRow>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeanMode {
    Exact,
    Approx,
}

fn check_atoms(atoms: &[Box<dyn Atom>], need_prox: bool, need_grad: bool) -> Result<()> {
    if atoms.is_empty() {
        return Err(MvrError::InvalidArgument("no atoms supplied".into()));
    }
    for (i, a) in atoms.iter().enumerate() {
        if need_prox && !a.kind().proximable() {
            return Err(MvrError::InvalidArgument(format!(
                "atom {i} is not proximable"
            )));
        }
        if need_grad && !a.kind().differentiable() {
            return Err(MvrError::InvalidArgument(format!(
                "atom {i} is not differentiable"
            )));
        }
    }
    Ok(())
}

fn trace_row(k: usize, atoms: &[&dyn Atom], u: &Signal) -> TraceRow {
    let (data, reg, total) = evaluate_energy(atoms, u);
    TraceRow { iteration: k, data, reg, total }
}

/// Relative-change stopping criterion:
/// mean pixelwise d(u_next, u_prev) / (1 + mean pixelwise d(u_prev, f)).
fn relative_change(u_next: &Signal, u_prev: &Signal, f: &Signal) -> f64 {
    let num = u_next.mean_dist(u_prev).expect("shapes agree inside solver");
    let den = 1.0 + u_prev.mean_dist(f).expect("shapes agree inside solver");
    num / den
}

fn sweep_indices(n: usize, order: SweepOrder, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    if order == SweepOrder::Shuffled {
        idx.shuffle(rng);
    }
    idx
}

/// Cyclic proximal point: per cycle applies every atom's prox in sweep order
/// with step `lambda_k`, Gauss-Seidel style (each prox sees the previous
/// atom's output).
pub fn cppa(
    atoms: &[Box<dyn Atom>],
    x0: &Signal,
    schedule: &SolverSchedule,
) -> Result<SolverOutput> {
    check_atoms(atoms, true, false)?;
    schedule.validate()?;
    let refs = atom_refs(atoms);
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.rng_seed);
    let mut u = x0.clone();
    let mut trace = vec![trace_row(0, &refs, &u)];
    for k in 1..=schedule.max_iters {
        let lambda = schedule.step(k);
        let prev = u.clone();
        for i in sweep_indices(atoms.len(), schedule.order, &mut rng) {
            atoms[i].prox(&mut u, lambda)?;
        }
        trace.push(trace_row(k, &refs, &u));
        if relative_change(&u, &prev, x0) < schedule.tol {
            break;
        }
    }
    Ok(SolverOutput { signal: u, trace })
}

/// Parallel proximal point: per cycle every atom applies its prox to the same
/// iterate, and the candidates are combined by a pixelwise intrinsic mean
/// (Karcher mean for `Exact`, iterated two-point averaging for `Approx`).
pub fn pppa(
    atoms: &[Box<dyn Atom>],
    x0: &Signal,
    schedule: &SolverSchedule,
    mean_mode: MeanMode,
) -> Result<SolverOutput> {
    check_atoms(atoms, true, false)?;
    schedule.validate()?;
    let m = x0.manifold.clone();
    let amb = m.ambient_dim();
    let n_atoms = atoms.len();
    let w = vec![1.0 / n_atoms as f64; n_atoms];
    let mean_sched = mean_schedule();
    let refs = atom_refs(atoms);
    let mut u = x0.clone();
    let mut trace = vec![trace_row(0, &refs, &u)];
    for k in 1..=schedule.max_iters {
        let lambda = schedule.step(k);
        let candidates: Vec<Signal> = atoms
            .par_iter()
            .map(|a| {
                let mut c = u.clone();
                a.prox(&mut c, lambda)?;
                Ok(c)
            })
            .collect::<Result<_>>()?;
        let prev = u.clone();
        let merged: Vec<Result<Vec<f64>>> = (0..u.len())
            .into_par_iter()
            .map(|j| {
                let pts: Vec<&[f64]> = candidates.iter().map(|c| c.point(j)).collect();
                match mean_mode {
                    MeanMode::Exact => {
                        karcher_mean_coords(&m, &pts, &w, &mean_sched).map(|(h, _)| h)
                    }
                    MeanMode::Approx => mean_approx_coords(&m, &pts, &w),
                }
            })
            .collect();
        for (j, r) in merged.into_iter().enumerate() {
            u.data_mut()[j * amb..(j + 1) * amb].copy_from_slice(&r?);
        }
        trace.push(trace_row(k, &refs, &u));
        if relative_change(&u, &prev, x0) < schedule.tol {
            break;
        }
    }
    Ok(SolverOutput { signal: u, trace })
}

/// Riemannian subgradient descent on the summed objective. Steps along the
/// accumulated per-pixel subgradient with step `lambda_k` and returns the
/// iterate with the best objective seen (including the starting point).
pub fn subgradient_descent(
    atoms: &[Box<dyn Atom>],
    x0: &Signal,
    schedule: &SolverSchedule,
) -> Result<SolverOutput> {
    check_atoms(atoms, false, true)?;
    schedule.validate()?;
    let refs = atom_refs(atoms);
    let m = x0.manifold.clone();
    let amb = m.ambient_dim();
    let mut u = x0.clone();
    let mut trace = vec![trace_row(0, &refs, &u)];
    let mut best = u.clone();
    let mut best_obj = trace[0].total;
    for k in 1..=schedule.max_iters {
        let lambda = schedule.step(k);
        let mut g = vec![0.0; u.len() * amb];
        for a in atoms.iter() {
            for (j, cj) in a.grad(&u)? {
                for (s, c) in g[j * amb..(j + 1) * amb].iter_mut().zip(cj) {
                    *s += c;
                }
            }
        }
        let prev = u.clone();
        for j in 0..u.len() {
            let gj = &g[j * amb..(j + 1) * amb];
            if gj.iter().all(|c| *c == 0.0) {
                continue;
            }
            let step: Vec<f64> = gj.iter().map(|c| -lambda * c).collect();
            let p = m.exp(prev.point(j), &step);
            u.data_mut()[j * amb..(j + 1) * amb].copy_from_slice(&p);
        }
        let row = trace_row(k, &refs, &u);
        trace.push(row);
        if row.total < best_obj {
            best_obj = row.total;
            best = u.clone();
        }
        if relative_change(&u, &prev, x0) < schedule.tol {
            break;
        }
    }
    Ok(SolverOutput { signal: best, trace })
}

/// Forward-backward splitting: per cycle one explicit Jacobi gradient step on
/// the summed data atoms (all gradients evaluated at the same iterate), then
/// sequential prox sweeps over the regularizer atoms, all with step
/// `lambda_k`.
pub fn fbs(
    data_atoms: &[Box<dyn Atom>],
    reg_atoms: &[Box<dyn Atom>],
    x0: &Signal,
    schedule: &SolverSchedule,
) -> Result<SolverOutput> {
    check_atoms(data_atoms, false, true)?;
    if !reg_atoms.is_empty() {
        check_atoms(reg_atoms, true, false)?;
    }
    schedule.validate()?;
    let all: Vec<&dyn Atom> = data_atoms.iter().chain(reg_atoms.iter()).map(|a| a.as_ref()).collect();
    let m = x0.manifold.clone();
    let amb = m.ambient_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.rng_seed);
    let mut u = x0.clone();
    let mut trace = vec![trace_row(0, &all, &u)];
    for k in 1..=schedule.max_iters {
        let lambda = schedule.step(k);
        let prev = u.clone();
        let mut g = vec![0.0; u.len() * amb];
        for a in data_atoms.iter() {
            for (j, cj) in a.grad(&u)? {
                for (s, c) in g[j * amb..(j + 1) * amb].iter_mut().zip(cj) {
                    *s += c;
                }
            }
        }
        for j in 0..u.len() {
            let gj = &g[j * amb..(j + 1) * amb];
            if gj.iter().all(|c| *c == 0.0) {
                continue;
            }
            let step: Vec<f64> = gj.iter().map(|c| -lambda * c).collect();
            let p = m.exp(prev.point(j), &step);
            u.data_mut()[j * amb..(j + 1) * amb].copy_from_slice(&p);
        }
        for i in sweep_indices(reg_atoms.len(), schedule.order, &mut rng) {
            reg_atoms[i].prox(&mut u, lambda)?;
        }
        trace.push(trace_row(k, &all, &u));
        if relative_change(&u, &prev, x0) < schedule.tol {
            break;
        }
    }
    Ok(SolverOutput { signal: u, trace })
}

/// Forward-backward splitting with trajectory-following data sweeps: per
/// cycle visits each data atom in sweep order and spends a step-size budget
/// of `lambda_k` on backtracked descent steps for that atom alone, then runs
/// the regularizer prox sweeps.
pub fn fbs_traj(
    data_atoms: &[Box<dyn Atom>],
    reg_atoms: &[Box<dyn Atom>],
    x0: &Signal,
    schedule: &SolverSchedule,
) -> Result<SolverOutput> {
    check_atoms(data_atoms, false, true)?;
    if !reg_atoms.is_empty() {
        check_atoms(reg_atoms, true, false)?;
    }
    schedule.validate()?;
    let all: Vec<&dyn Atom> = data_atoms.iter().chain(reg_atoms.iter()).map(|a| a.as_ref()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.rng_seed);
    let mut u = x0.clone();
    let mut trace = vec![trace_row(0, &all, &u)];
    for k in 1..=schedule.max_iters {
        let lambda = schedule.step(k);
        let prev = u.clone();
        for i in sweep_indices(data_atoms.len(), schedule.order, &mut rng) {
            traj_step(data_atoms[i].as_ref(), &mut u, lambda)?;
        }
        for i in sweep_indices(reg_atoms.len(), schedule.order, &mut rng) {
            reg_atoms[i].prox(&mut u, lambda)?;
        }
        trace.push(trace_row(k, &all, &u));
        if relative_change(&u, &prev, x0) < schedule.tol {
            break;
        }
    }
    Ok(SolverOutput { signal: u, trace })
}

/// Spends a cumulative step-size budget on one atom: repeated descent steps
/// along the atom's gradient, each sized by Armijo backtracking (halving,
/// slope 1e-4) starting from the remaining budget. The objective is
/// non-increasing along the produced path. Returns the step size actually
/// consumed.
pub fn traj_step(atom: &dyn Atom, u: &mut Signal, budget: f64) -> Result<f64> {
    if !(budget >= 0.0) {
        return Err(MvrError::InvalidArgument("negative trajectory budget".into()));
    }
    let m = u.manifold.clone();
    let amb = m.ambient_dim();
    let mut remaining = budget;
    let mut spent = 0.0;
    while remaining > 1e-14 * budget.max(1.0) {
        let g = atom.grad(u)?;
        let gn2: f64 = g.iter().map(|(_, c)| c.iter().map(|x| x * x).sum::<f64>()).sum();
        if gn2.sqrt() < 1e-13 {
            break;
        }
        let here = atom.evaluate(u);
        let mut s = remaining;
        let mut accepted = None;
        for _ in 0..60 {
            let mut cand = u.clone();
            for (j, cj) in &g {
                let step: Vec<f64> = cj.iter().map(|c| -s * c).collect();
                let p = m.exp(u.point(*j), &step);
                cand.data_mut()[j * amb..(j + 1) * amb].copy_from_slice(&p);
            }
            if atom.evaluate(&cand) <= here - 1e-4 * s * gn2 {
                accepted = Some(cand);
                break;
            }
            s *= 0.5;
        }
        match accepted {
            Some(cand) => {
                *u = cand;
                remaining -= s;
                spent += s;
            }
            None => break,
        }
    }
    Ok(spent)
}
