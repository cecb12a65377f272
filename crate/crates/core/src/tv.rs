//! First-order total-variation style models: energies and atom splittings
//! for 1-D signals and 2-D images, plus TV / H¹ / Huber denoising drivers.
//!
//! The univariate energy is (1/q) Σ d(x_i, f_i)^q + α Σ d(x_i, x_{i+1}); the
//! bivariate regularizer couples the forward horizontal/vertical differences
//! of each pixel in an inner ℓᵖ norm. Out-of-bound summands are zero.

use rayon::prelude::*;

use crate::atoms::{Atom, AtomKind, AtomRole};
use crate::error::{MvrError, Result};
use crate::manifold::Manifold;
use crate::prox::{huber, prox_data, prox_pair, ProxParams, ProxVariant};
use crate::signal::{Signal, SignalShape};
use crate::solver::{cppa, pppa, subgradient_descent, MeanMode, SolverOutput, SolverSchedule};

#[derive(Clone, Copy, Debug)]
pub struct TVModel {
    /// Regularization weight α > 0.
    pub alpha: f64,
    /// Data exponent q ∈ {1, 2}.
    pub q: f64,
    /// Inner coupling exponent p ∈ {1, 2} for images; p = 1 keeps the exact
    /// pairwise prox splitting, p = 2 falls back to a joint subgradient atom.
    pub p: f64,
    /// Adds the two diagonal difference directions with weight α/√2 to the
    /// separable (p = 1) splitting; ignored by the p = 2 coupling atom.
    pub diagonal_differences: bool,
}

impl Default for TVModel {
    fn default() -> Self {
        TVModel { alpha: 1.0, q: 2.0, p: 1.0, diagonal_differences: false }
    }
}

impl TVModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(MvrError::InvalidArgument(format!(
                "alpha must be nonnegative, got {}",
                self.alpha
            )));
        }
        if self.q != 1.0 && self.q != 2.0 {
            return Err(MvrError::InvalidArgument(format!(
                "data exponent must be 1 or 2, got {}",
                self.q
            )));
        }
        if self.p != 1.0 && self.p != 2.0 {
            return Err(MvrError::InvalidArgument(format!(
                "coupling exponent must be 1 or 2, got {}",
                self.p
            )));
        }
        Ok(())
    }
}

/// Pairwise regularizer shapes shared by the TV, H¹ and Huber models. The
/// quadratic penalty carries the ½ so it is exactly what
/// `prox_pair_quadratic` minimizes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PairPenalty {
    /// α·d
    Abs,
    /// (α/2)·d²
    Quadratic,
    /// α·huber(d)
    Huber { omega: f64, tau: f64 },
}

impl PairPenalty {
    fn value(&self, alpha: f64, d: f64) -> f64 {
        match self {
            PairPenalty::Abs => alpha * d,
            PairPenalty::Quadratic => 0.5 * alpha * d * d,
            PairPenalty::Huber { omega, tau } => alpha * huber(d, *omega, *tau),
        }
    }

    fn prox_params(&self, lambda: f64, alpha: f64) -> ProxParams {
        match self {
            PairPenalty::Abs => ProxParams { lambda, alpha, q: 1.0, variant: ProxVariant::Power },
            PairPenalty::Quadratic => {
                ProxParams { lambda, alpha, q: 2.0, variant: ProxVariant::Power }
            }
            PairPenalty::Huber { omega, tau } => ProxParams {
                lambda,
                alpha,
                q: 1.0,
                variant: ProxVariant::Huber { omega: *omega, tau: *tau },
            },
        }
    }
}

fn data_fidelity(x: &Signal, f: &Signal, q: f64) -> Result<f64> {
    if x.manifold != f.manifold || x.shape != f.shape {
        return Err(MvrError::InvalidArgument(
            "signal and data must share manifold and shape".into(),
        ));
    }
    let m = &x.manifold;
    Ok((0..x.len())
        .map(|i| m.dist(x.point(i), f.point(i)).powf(q) / q)
        .sum())
}

/// Univariate TV energy (1/q) Σ d(x_i, f_i)^q + α Σ d(x_i, x_{i+1}).
pub fn tv_energy_1d(x: &Signal, f: &Signal, model: &TVModel) -> Result<f64> {
    model.validate()?;
    let data = data_fidelity(x, f, model.q)?;
    let m = &x.manifold;
    let reg: f64 = (0..x.len().saturating_sub(1))
        .map(|i| m.dist(x.point(i), x.point(i + 1)))
        .sum();
    Ok(data + model.alpha * reg)
}

/// Bivariate TV energy with inner ℓᵖ coupling of each pixel's forward
/// horizontal and vertical differences; with `diagonal_differences` and
/// p = 1 the two diagonal directions are added with weight α/√2.
pub fn tv_energy_2d(x: &Signal, f: &Signal, model: &TVModel) -> Result<f64> {
    model.validate()?;
    let data = data_fidelity(x, f, model.q)?;
    let m = &x.manifold;
    let (rows, cols) = x.dims();
    let idx = |i: usize, j: usize| i * cols + j;
    let mut reg = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let dv = if i + 1 < rows { m.dist(x.point(idx(i, j)), x.point(idx(i + 1, j))) } else { 0.0 };
            let dh = if j + 1 < cols { m.dist(x.point(idx(i, j)), x.point(idx(i, j + 1))) } else { 0.0 };
            reg += if model.p == 1.0 {
                dv + dh
            } else {
                (dv * dv + dh * dh).sqrt()
            };
        }
    }
    let mut total = data + model.alpha * reg;
    if model.diagonal_differences && model.p == 1.0 {
        let w = model.alpha / 2.0_f64.sqrt();
        let mut diag = 0.0;
        for i in 0..rows.saturating_sub(1) {
            for j in 0..cols {
                if j + 1 < cols {
                    diag += m.dist(x.point(idx(i, j)), x.point(idx(i + 1, j + 1)));
                }
                if j > 0 {
                    diag += m.dist(x.point(idx(i, j)), x.point(idx(i + 1, j - 1)));
                }
            }
        }
        total += w * diag;
    }
    Ok(total)
}

/// Data-fidelity atom: (1/q) Σ d(u_i, f_i)^q over every sample, proximable
/// pixelwise and differentiable away from cut loci.
pub struct DataAtom {
    f: Signal,
    q: f64,
}

impl DataAtom {
    pub fn new(f: Signal, q: f64) -> Self {
        DataAtom { f, q }
    }
}

impl Atom for DataAtom {
    fn role(&self) -> AtomRole {
        AtomRole::Data
    }
    fn kind(&self) -> AtomKind {
        AtomKind::Both
    }
    fn footprint(&self) -> Vec<usize> {
        (0..self.f.len()).collect()
    }
    fn evaluate(&self, u: &Signal) -> f64 {
        let m = &u.manifold;
        (0..u.len())
            .map(|i| m.dist(u.point(i), self.f.point(i)).powf(self.q) / self.q)
            .sum()
    }
    fn prox(&self, u: &mut Signal, lambda: f64) -> Result<()> {
        let m = u.manifold.clone();
        let params = ProxParams { lambda, alpha: 1.0, q: self.q, variant: ProxVariant::Power };
        params.validate()?;
        let moved: Vec<Vec<f64>> = (0..u.len())
            .into_par_iter()
            .map(|i| prox_data(&m, u.point(i), self.f.point(i), &params))
            .collect::<Result<_>>()?;
        for (i, c) in moved.into_iter().enumerate() {
            u.set_point(i, &c);
        }
        Ok(())
    }
    fn grad(&self, u: &Signal) -> Result<Vec<(usize, Vec<f64>)>> {
        let m = &u.manifold;
        let mut out = Vec::with_capacity(u.len());
        for i in 0..u.len() {
            let d = m.dist(u.point(i), self.f.point(i));
            if d < 1e-14 {
                out.push((i, vec![0.0; m.ambient_dim()]));
                continue;
            }
            let l = m.log(u.point(i), self.f.point(i));
            if l.non_unique {
                return Err(MvrError::CutLocus(format!(
                    "data gradient undefined: sample {i} sits on the cut locus of its datum"
                )));
            }
            let scale = -d.powf(self.q - 2.0);
            out.push((i, l.value.iter().map(|c| scale * c).collect()));
        }
        Ok(out)
    }
}

/// One half of an even/odd difference splitting: a set of index pairs with
/// pairwise disjoint footprints, all shrunk simultaneously by the pair prox.
pub struct PairAtom {
    pairs: Vec<(usize, usize)>,
    alpha: f64,
    penalty: PairPenalty,
}

impl PairAtom {
    pub fn new(pairs: Vec<(usize, usize)>, alpha: f64, penalty: PairPenalty) -> Self {
        PairAtom { pairs, alpha, penalty }
    }
}

impl Atom for PairAtom {
    fn role(&self) -> AtomRole {
        AtomRole::Regularizer
    }
    fn kind(&self) -> AtomKind {
        AtomKind::Proximable
    }
    fn footprint(&self) -> Vec<usize> {
        self.pairs.iter().flat_map(|(a, b)| [*a, *b]).collect()
    }
    fn evaluate(&self, u: &Signal) -> f64 {
        let m = &u.manifold;
        self.pairs
            .iter()
            .map(|(a, b)| self.penalty.value(self.alpha, m.dist(u.point(*a), u.point(*b))))
            .sum()
    }
    fn prox(&self, u: &mut Signal, lambda: f64) -> Result<()> {
        let m = u.manifold.clone();
        let params = self.penalty.prox_params(lambda, self.alpha);
        params.validate()?;
        let moved: Vec<(Vec<f64>, Vec<f64>)> = self
            .pairs
            .par_iter()
            .map(|(a, b)| prox_pair(&m, u.point(*a), u.point(*b), &params))
            .collect::<Result<_>>()?;
        for ((a, b), (ca, cb)) in self.pairs.iter().zip(moved) {
            u.set_point(*a, &ca);
            u.set_point(*b, &cb);
        }
        Ok(())
    }
}

/// Joint subgradient atom for the p = 2 inner coupling on images:
/// α Σ_{i,j} (d(u_{i,j}, u_{i+1,j})² + d(u_{i,j}, u_{i,j+1})²)^{1/2}.
pub struct IsotropicCouplingAtom {
    rows: usize,
    cols: usize,
    alpha: f64,
}

impl IsotropicCouplingAtom {
    pub fn new(rows: usize, cols: usize, alpha: f64) -> Self {
        IsotropicCouplingAtom { rows, cols, alpha }
    }

    fn group(&self, m: &Manifold, u: &Signal, i: usize, j: usize) -> f64 {
        let idx = |i: usize, j: usize| i * self.cols + j;
        let dv = if i + 1 < self.rows { m.dist(u.point(idx(i, j)), u.point(idx(i + 1, j))) } else { 0.0 };
        let dh = if j + 1 < self.cols { m.dist(u.point(idx(i, j)), u.point(idx(i, j + 1))) } else { 0.0 };
        (dv * dv + dh * dh).sqrt()
    }
}

impl Atom for IsotropicCouplingAtom {
    fn role(&self) -> AtomRole {
        AtomRole::Regularizer
    }
    fn kind(&self) -> AtomKind {
        AtomKind::Differentiable
    }
    fn footprint(&self) -> Vec<usize> {
        (0..self.rows * self.cols).collect()
    }
    fn evaluate(&self, u: &Signal) -> f64 {
        let m = &u.manifold;
        let mut total = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                total += self.group(m, u, i, j);
            }
        }
        self.alpha * total
    }
    fn grad(&self, u: &Signal) -> Result<Vec<(usize, Vec<f64>)>> {
        let m = &u.manifold;
        let amb = m.ambient_dim();
        let idx = |i: usize, j: usize| i * self.cols + j;
        let mut grads = vec![vec![0.0; amb]; self.rows * self.cols];
        // Each coupled group g_{i,j} touches its own pixel (as base of both
        // differences) and its right/down neighbors (as tips); ∂d/∂(base) is
        // −log/d, so each group adds −log/g at the base and the transported
        // analogue at the tips. Zero groups contribute the zero subgradient.
        for i in 0..self.rows {
            for j in 0..self.cols {
                let g = self.group(m, u, i, j);
                if g < 1e-14 {
                    continue;
                }
                let here = idx(i, j);
                for (ni, nj) in [(i + 1, j), (i, j + 1)] {
                    if ni >= self.rows || nj >= self.cols {
                        continue;
                    }
                    let there = idx(ni, nj);
                    let fwd = checked_log(m, u.point(here), u.point(there), here)?;
                    let bwd = checked_log(m, u.point(there), u.point(here), there)?;
                    for (acc, c) in grads[here].iter_mut().zip(&fwd) {
                        *acc -= self.alpha * c / g;
                    }
                    for (acc, c) in grads[there].iter_mut().zip(&bwd) {
                        *acc -= self.alpha * c / g;
                    }
                }
            }
        }
        Ok(grads.into_iter().enumerate().collect())
    }
}

fn checked_log(m: &Manifold, p: &[f64], q: &[f64], index: usize) -> Result<Vec<f64>> {
    let l = m.log(p, q);
    if l.non_unique {
        return Err(MvrError::CutLocus(format!(
            "difference gradient undefined: sample {index} is antipodal to its neighbor"
        )));
    }
    Ok(l.value)
}

fn even_odd_pairs_1d(n: usize) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
    let even = (0..n.saturating_sub(1)).step_by(2).map(|i| (i, i + 1)).collect();
    let odd = (1..n.saturating_sub(1)).step_by(2).map(|i| (i, i + 1)).collect();
    (even, odd)
}

fn tv_split(f: &Signal, model: &TVModel, penalty: PairPenalty) -> Vec<Box<dyn Atom>> {
    let mut atoms: Vec<Box<dyn Atom>> = vec![Box::new(DataAtom::new(f.clone(), model.q))];
    let (rows, cols) = f.dims();
    let idx = |i: usize, j: usize| i * cols + j;
    if let SignalShape::One(n) = f.shape {
        let (even, odd) = even_odd_pairs_1d(n);
        atoms.push(Box::new(PairAtom::new(even, model.alpha, penalty)));
        atoms.push(Box::new(PairAtom::new(odd, model.alpha, penalty)));
        return atoms;
    }
    // Images: four difference atoms (vertical/horizontal × even/odd anchor)
    // whose pairs are disjoint inside each atom.
    for parity in 0..2 {
        let mut vert = Vec::new();
        for i in (parity..rows.saturating_sub(1)).step_by(2) {
            for j in 0..cols {
                vert.push((idx(i, j), idx(i + 1, j)));
            }
        }
        atoms.push(Box::new(PairAtom::new(vert, model.alpha, penalty)));
    }
    for parity in 0..2 {
        let mut horiz = Vec::new();
        for i in 0..rows {
            for j in (parity..cols.saturating_sub(1)).step_by(2) {
                horiz.push((idx(i, j), idx(i, j + 1)));
            }
        }
        atoms.push(Box::new(PairAtom::new(horiz, model.alpha, penalty)));
    }
    if model.diagonal_differences {
        let w = model.alpha / 2.0_f64.sqrt();
        // Down-right and down-left diagonals, split by anchor-row parity so
        // pairs along one diagonal line never share a pixel.
        for parity in 0..2 {
            let mut dr = Vec::new();
            let mut dl = Vec::new();
            for i in (parity..rows.saturating_sub(1)).step_by(2) {
                for j in 0..cols {
                    if j + 1 < cols {
                        dr.push((idx(i, j), idx(i + 1, j + 1)));
                    }
                    if j > 0 {
                        dl.push((idx(i, j), idx(i + 1, j - 1)));
                    }
                }
            }
            atoms.push(Box::new(PairAtom::new(dr, w, penalty)));
            atoms.push(Box::new(PairAtom::new(dl, w, penalty)));
        }
    }
    atoms
}

/// Splits the TV objective into proximable atoms: data atom plus even/odd
/// difference atoms (3 for signals, 5 for images, plus 4 diagonal atoms when
/// enabled). For p = 2 images the separable difference atoms are replaced by
/// one joint subgradient coupling atom.
pub fn tv_atoms(f: &Signal, model: &TVModel) -> Result<Vec<Box<dyn Atom>>> {
    model.validate()?;
    if model.p == 2.0 {
        if let SignalShape::Two(rows, cols) = f.shape {
            return Ok(vec![
                Box::new(DataAtom::new(f.clone(), model.q)),
                Box::new(IsotropicCouplingAtom::new(rows, cols, model.alpha)),
            ]);
        }
    }
    Ok(tv_split(f, model, PairPenalty::Abs))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TvEngine {
    Cppa,
    Pppa(MeanMode),
}

fn run_engine(
    atoms: &[Box<dyn Atom>],
    f: &Signal,
    engine: TvEngine,
    schedule: &SolverSchedule,
) -> Result<SolverOutput> {
    match engine {
        TvEngine::Cppa => cppa(atoms, f, schedule),
        TvEngine::Pppa(mode) => pppa(atoms, f, schedule, mode),
    }
}

/// TV denoising of `f` started from `f` itself. For p = 2 images the model
/// has no exact prox splitting, so either engine choice runs plain
/// subgradient descent on the summed objective (slower and less accurate
/// near kinks; documented fallback).
pub fn denoise_tv(
    f: &Signal,
    model: &TVModel,
    engine: TvEngine,
    schedule: &SolverSchedule,
) -> Result<SolverOutput> {
    model.validate()?;
    if model.p == 2.0 && matches!(f.shape, SignalShape::Two(_, _)) {
        let atoms = tv_atoms(f, model)?;
        return subgradient_descent(&atoms, f, schedule);
    }
    run_engine(&tv_atoms(f, model)?, f, engine, schedule)
}

/// H¹ (quadratic-difference) denoising: same splitting as TV with the
/// pairwise penalty (α/2)·d² and its exact prox. The coupling exponent is
/// irrelevant because squares add separably.
pub fn denoise_h1(
    f: &Signal,
    model: &TVModel,
    engine: TvEngine,
    schedule: &SolverSchedule,
) -> Result<SolverOutput> {
    model.validate()?;
    run_engine(&tv_split(f, model, PairPenalty::Quadratic), f, engine, schedule)
}

/// Huber-regularized denoising: TV splitting with the pairwise penalty
/// α·huber(d), quadratic of slope ω/τ near zero and linear of slope ω past τ.
pub fn denoise_huber(
    f: &Signal,
    model: &TVModel,
    omega: f64,
    tau: f64,
    engine: TvEngine,
    schedule: &SolverSchedule,
) -> Result<SolverOutput> {
    model.validate()?;
    if !(omega > 0.0) || !(tau > 0.0) {
        return Err(MvrError::InvalidArgument("huber parameters must be positive".into()));
    }
    run_engine(
        &tv_split(f, model, PairPenalty::Huber { omega, tau }),
        f,
        engine,
        schedule,
    )
}

/// Energy actually minimized by [`denoise_h1`] / [`denoise_huber`]: data
/// fidelity plus the separable pairwise penalty over all difference
/// directions in the splitting.
pub fn pairwise_energy(
    x: &Signal,
    f: &Signal,
    model: &TVModel,
    penalty: PairPenalty,
) -> Result<f64> {
    model.validate()?;
    let data = data_fidelity(x, f, model.q)?;
    let m = &x.manifold;
    let mut reg = 0.0;
    for atom_pairs in pair_lists(x, model) {
        for (a, b, w) in atom_pairs {
            reg += penalty.value(w, m.dist(x.point(a), x.point(b)));
        }
    }
    Ok(data + reg)
}

fn pair_lists(f: &Signal, model: &TVModel) -> Vec<Vec<(usize, usize, f64)>> {
    // Flattened mirror of the splitting used by tv_split, for energy checks.
    let (rows, cols) = f.dims();
    let idx = |i: usize, j: usize| i * cols + j;
    let mut lists = Vec::new();
    if let SignalShape::One(n) = f.shape {
        let (even, odd) = even_odd_pairs_1d(n);
        lists.push(even.into_iter().map(|(a, b)| (a, b, model.alpha)).collect());
        lists.push(odd.into_iter().map(|(a, b)| (a, b, model.alpha)).collect());
        return lists;
    }
    let mut vert = Vec::new();
    for i in 0..rows.saturating_sub(1) {
        for j in 0..cols {
            vert.push((idx(i, j), idx(i + 1, j), model.alpha));
        }
    }
    let mut horiz = Vec::new();
    for i in 0..rows {
        for j in 0..cols.saturating_sub(1) {
            horiz.push((idx(i, j), idx(i, j + 1), model.alpha));
        }
    }
    lists.push(vert);
    lists.push(horiz);
    if model.diagonal_differences {
        let w = model.alpha / 2.0_f64.sqrt();
        let mut diag = Vec::new();
        for i in 0..rows.saturating_sub(1) {
            for j in 0..cols {
                if j + 1 < cols {
                    diag.push((idx(i, j), idx(i + 1, j + 1), w));
                }
                if j > 0 {
                    diag.push((idx(i, j), idx(i + 1, j - 1), w));
                }
            }
        }
        lists.push(diag);
    }
    lists
}
