//! Mumford-Shah and Potts restoration: exact univariate dynamic programming
//! over segment boundaries, and a penalty-splitting scheme that reduces the
//! image problems to per-line univariate solves over a neighborhood system.
//!
//! The univariate solver scans segment ends r and minimizes
//! B(prefix r) = min_l { B(prefix l-1) + gamma + eps(l, r) } where eps is the
//! best approximation error of one jump-free segment. Segment errors come
//! from weighted Karcher means / geodesic medians (Potts) or a cyclic
//! proximal solve of the L^q-V^p problem (Mumford-Shah).

use rayon::prelude::*;

use crate::atoms::{Atom, AtomKind, AtomRole};
use crate::error::{MvrError, Result};
use crate::manifold::Manifold;
use crate::prox::{prox_data, ProxParams, ProxVariant};
use crate::signal::{Signal, SignalShape};
use crate::solver::{cppa, SolverSchedule};
use crate::stats::{intrinsic_median_coords, karcher_mean_coords_from};
use crate::tv::{PairAtom, PairPenalty};

/// Distances below this count as "no jump" when reading a Potts jump set
/// off a solution; segment solves return exactly equal points within a
/// segment, so anything larger marks a genuine boundary.
const JUMP_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MsMode {
    MumfordShah,
    Potts,
}

/// Parameters of the piecewise-smooth (Mumford-Shah) and piecewise-constant
/// (Potts) models. The jump penalty gamma and the truncation height s of the
/// Mumford-Shah pair penalty min(gamma, (alpha/p) d^p) are linked by
/// gamma = alpha s^p / p. In Potts mode alpha and p are unused.
#[derive(Clone, Copy, Debug)]
pub struct MSModel {
    pub alpha: f64,
    pub gamma: f64,
    pub p: f64,
    pub q: f64,
    pub mode: MsMode,
}

impl MSModel {
    pub fn mumford_shah(alpha: f64, gamma: f64, p: f64, q: f64) -> Self {
        MSModel { alpha, gamma, p, q, mode: MsMode::MumfordShah }
    }

    pub fn potts(gamma: f64, q: f64) -> Self {
        MSModel { alpha: 1.0, gamma, p: 1.0, q, mode: MsMode::Potts }
    }

    /// Height s at which the Mumford-Shah pair penalty saturates:
    /// (alpha/p) s^p = gamma.
    pub fn jump_height(&self) -> f64 {
        (self.p * self.gamma / self.alpha).powf(1.0 / self.p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(MvrError::InvalidArgument(format!(
                "gamma must be positive and finite, got {}",
                self.gamma
            )));
        }
        if self.q != 1.0 && self.q != 2.0 {
            return Err(MvrError::InvalidArgument(format!(
                "data exponent q must be 1 or 2, got {}",
                self.q
            )));
        }
        if self.mode == MsMode::MumfordShah {
            if !(self.alpha > 0.0 && self.alpha.is_finite()) {
                return Err(MvrError::InvalidArgument(format!(
                    "alpha must be positive and finite, got {}",
                    self.alpha
                )));
            }
            if self.p != 1.0 && self.p != 2.0 {
                return Err(MvrError::InvalidArgument(format!(
                    "variation exponent p must be 1 or 2, got {}",
                    self.p
                )));
            }
        }
        Ok(())
    }

    /// Pairwise penalty of one neighbor difference of size d.
    fn pair_cost(&self, d: f64) -> f64 {
        match self.mode {
            MsMode::MumfordShah => (self.alpha / self.p * d.powf(self.p)).min(self.gamma),
            MsMode::Potts => {
                if d > JUMP_TOL {
                    self.gamma
                } else {
                    0.0
                }
            }
        }
    }
}

/// Finite-difference directions and weights of the discrete image jump
/// penalty. The default pairs axial and diagonal differences with weights
/// sqrt(2)-1 and 1-sqrt(2)/2, which makes the penalty of straight edges
/// nearly isotropic.
#[derive(Clone, Debug)]
pub struct NeighborhoodSystem {
    pub directions: Vec<(i32, i32)>,
    pub weights: Vec<f64>,
}

impl Default for NeighborhoodSystem {
    fn default() -> Self {
        let s = std::f64::consts::SQRT_2;
        NeighborhoodSystem {
            directions: vec![(1, 0), (0, 1), (1, 1), (1, -1)],
            weights: vec![s - 1.0, s - 1.0, 1.0 - s / 2.0, 1.0 - s / 2.0],
        }
    }
}

impl NeighborhoodSystem {
    /// Axial differences only, unit weights.
    pub fn axial() -> Self {
        NeighborhoodSystem { directions: vec![(1, 0), (0, 1)], weights: vec![1.0, 1.0] }
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.directions.is_empty() || self.directions.len() != self.weights.len() {
            return Err(MvrError::InvalidArgument(
                "neighborhood needs equally many directions and weights, at least one".into(),
            ));
        }
        if self.directions.iter().any(|d| *d == (0, 0)) {
            return Err(MvrError::InvalidArgument("zero direction in neighborhood".into()));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(MvrError::InvalidArgument("neighborhood weights must be >= 0".into()));
        }
        Ok(())
    }
}

fn check_compatible(x: &Signal, f: &Signal) -> Result<()> {
    if x.manifold != f.manifold {
        return Err(MvrError::ManifoldMismatch { left: x.manifold.name(), right: f.manifold.name() });
    }
    if x.shape != f.shape {
        return Err(MvrError::InvalidArgument("signal shapes differ".into()));
    }
    Ok(())
}

/// Univariate model energy: (1/q) sum_i d(x_i, f_i)^q plus, per neighbor
/// pair, min(gamma, (alpha/p) d^p) in Mumford-Shah mode or gamma per jump in
/// Potts mode.
pub fn ms_energy_1d(x: &Signal, f: &Signal, model: &MSModel) -> Result<f64> {
    model.validate()?;
    check_compatible(x, f)?;
    if !matches!(x.shape, SignalShape::One(_)) {
        return Err(MvrError::InvalidArgument("ms_energy_1d expects univariate signals".into()));
    }
    let m = &x.manifold;
    let n = x.len();
    let mut e = 0.0;
    for i in 0..n {
        e += m.dist(x.point(i), f.point(i)).powf(model.q) / model.q;
    }
    for i in 0..n.saturating_sub(1) {
        e += model.pair_cost(m.dist(x.point(i), x.point(i + 1)));
    }
    Ok(e)
}

/// Image model energy over a neighborhood system: the data term plus
/// sum_s w_s sum_{pixels} pair_cost(d(x_{ij}, x_{(i,j)+a_s})), out-of-bounds
/// neighbors dropped.
pub fn ms_energy_2d(
    x: &Signal,
    f: &Signal,
    model: &MSModel,
    ns: &NeighborhoodSystem,
) -> Result<f64> {
    model.validate()?;
    ns.validate()?;
    check_compatible(x, f)?;
    let (rows, cols) = match x.shape {
        SignalShape::Two(r, c) => (r, c),
        _ => return Err(MvrError::InvalidArgument("ms_energy_2d expects images".into())),
    };
    let m = &x.manifold;
    let mut e = 0.0;
    for i in 0..rows * cols {
        e += m.dist(x.point(i), f.point(i)).powf(model.q) / model.q;
    }
    for ((di, dj), w) in ns.directions.iter().zip(&ns.weights) {
        for i in 0..rows as i64 {
            for j in 0..cols as i64 {
                let (ni, nj) = (i + *di as i64, j + *dj as i64);
                if ni < 0 || ni >= rows as i64 || nj < 0 || nj >= cols as i64 {
                    continue;
                }
                let a = x.point(i as usize * cols + j as usize);
                let b = x.point(ni as usize * cols + nj as usize);
                e += w * model.pair_cost(m.dist(a, b));
            }
        }
    }
    Ok(e)
}

/// Jump set of a restored univariate signal: indices i whose difference to
/// sample i+1 exceeds the model's jump height (Mumford-Shah) or is nonzero
/// (Potts).
pub fn jump_set(x: &Signal, model: &MSModel) -> Vec<usize> {
    let m = &x.manifold;
    let thresh = match model.mode {
        MsMode::MumfordShah => model.jump_height(),
        MsMode::Potts => JUMP_TOL,
    };
    (0..x.len().saturating_sub(1))
        .filter(|&i| m.dist(x.point(i), x.point(i + 1)) > thresh)
        .collect()
}

// ---------------------------------------------------------------------------
// segment solvers

/// Iteration budget for the warm-started segment means; errors out as
/// NoConvergence beyond this, which the DP propagates.
fn segment_mean_schedule() -> SolverSchedule {
    SolverSchedule { lambda0: 1.0, decay: 1.0, max_iters: 300, tol: 1e-11, ..Default::default() }
}

fn segment_median_schedule() -> SolverSchedule {
    SolverSchedule { lambda0: 1.0, decay: 1.0, max_iters: 2000, tol: 0.0, ..Default::default() }
}

fn segment_cppa_schedule() -> SolverSchedule {
    SolverSchedule { lambda0: 2.0, decay: 1.0, max_iters: 800, tol: 1e-11, ..Default::default() }
}

/// Data anchors of one univariate subproblem: per-position coordinate views
/// and a weight per anchor signal. Plain denoising has the single anchor
/// (f, 1); the splitting scheme adds (coupled split, mu_k).
type Anchors<'a> = [(Vec<&'a [f64]>, f64)];

/// (weight/q) sum_i d(x_i, anchor_i)^q as a proximable atom; the weight
/// rides on the prox's alpha parameter.
struct WeightedDataAtom {
    anchor: Signal,
    q: f64,
    weight: f64,
}

impl Atom for WeightedDataAtom {
    fn role(&self) -> AtomRole {
        AtomRole::Data
    }
    fn kind(&self) -> AtomKind {
        AtomKind::Proximable
    }
    fn footprint(&self) -> Vec<usize> {
        (0..self.anchor.len()).collect()
    }
    fn evaluate(&self, u: &Signal) -> f64 {
        let m = &u.manifold;
        self.weight
            * (0..u.len())
                .map(|i| m.dist(u.point(i), self.anchor.point(i)).powf(self.q) / self.q)
                .sum::<f64>()
    }
    fn prox(&self, u: &mut Signal, lambda: f64) -> Result<()> {
        let m = u.manifold.clone();
        let params =
            ProxParams { lambda, alpha: self.weight, q: self.q, variant: ProxVariant::Power };
        params.validate()?;
        for i in 0..u.len() {
            let c = prox_data(&m, u.point(i), self.anchor.point(i), &params)?;
            u.set_point(i, &c);
        }
        Ok(())
    }
}

/// Constant-segment error over positions l..=r: (1/q) of the weighted
/// distance powers to the best single point (mean for q=2, median for q=1).
/// Returns (error, point coords).
fn potts_segment(
    m: &Manifold,
    anchors: &Anchors,
    l: usize,
    r: usize,
    q: f64,
    warm: Option<&[f64]>,
) -> Result<(f64, Vec<f64>)> {
    let mut pts: Vec<&[f64]> = Vec::with_capacity((r - l + 1) * anchors.len());
    let mut wts: Vec<f64> = Vec::with_capacity(pts.capacity());
    for (views, w) in anchors {
        if *w == 0.0 {
            continue;
        }
        for v in &views[l..=r] {
            pts.push(v);
            wts.push(*w);
        }
    }
    if q == 2.0 {
        let total: f64 = wts.iter().sum();
        let norm: Vec<f64> = wts.iter().map(|w| w / total).collect();
        let (h, _) = karcher_mean_coords_from(m, warm, &pts, &norm, &segment_mean_schedule())?;
        let eps = pts
            .iter()
            .zip(&wts)
            .map(|(z, w)| {
                let d = m.dist(&h, z);
                0.5 * w * d * d
            })
            .sum();
        Ok((eps, h))
    } else {
        let (h, obj) = intrinsic_median_coords(m, warm, &pts, &wts, &segment_median_schedule())?;
        Ok((obj, h))
    }
}

/// Jump-free L^q-V^p segment solve by the cyclic proximal scheme. `alpha` of
/// the model is the effective variation weight. Returns (error, coords of
/// the r-l+1 positions).
fn ms_segment(
    m: &Manifold,
    anchors: &Anchors,
    l: usize,
    r: usize,
    model: &MSModel,
    warm: Option<&[f64]>,
) -> Result<(f64, Vec<f64>)> {
    let len = r - l + 1;
    let amb = m.ambient_dim();
    let mut x0 = Vec::with_capacity(len * amb);
    match warm {
        Some(w) if w.len() >= len * amb => x0.extend_from_slice(&w[..len * amb]),
        Some(w) if w.len() >= amb => {
            // Shorter warm signals (the previous segment end) pad with their
            // last point.
            x0.extend_from_slice(w);
            let last = w[w.len() - amb..].to_vec();
            while x0.len() < len * amb {
                x0.extend_from_slice(&last);
            }
        }
        _ => {
            for v in &anchors[0].0[l..=r] {
                x0.extend_from_slice(v);
            }
        }
    }
    let x0 = Signal::from_coords(m.clone(), SignalShape::One(len), x0)?;
    let mut atoms: Vec<Box<dyn Atom>> = Vec::new();
    for (views, w) in anchors {
        if *w == 0.0 {
            continue;
        }
        let mut coords = Vec::with_capacity(len * amb);
        for v in &views[l..=r] {
            coords.extend_from_slice(v);
        }
        let seg = Signal::from_coords(m.clone(), SignalShape::One(len), coords)?;
        atoms.push(Box::new(WeightedDataAtom { anchor: seg, q: model.q, weight: *w }));
    }
    if len > 1 {
        let pen = |p: f64| if p == 1.0 { PairPenalty::Abs } else { PairPenalty::Quadratic };
        let even: Vec<(usize, usize)> = (0..len - 1).step_by(2).map(|i| (i, i + 1)).collect();
        let odd: Vec<(usize, usize)> = (1..len - 1).step_by(2).map(|i| (i, i + 1)).collect();
        if !even.is_empty() {
            atoms.push(Box::new(PairAtom::new(even, model.alpha, pen(model.p))));
        }
        if !odd.is_empty() {
            atoms.push(Box::new(PairAtom::new(odd, model.alpha, pen(model.p))));
        }
    }
    let out = cppa(&atoms, &x0, &segment_cppa_schedule())?;
    let eps = out.trace.last().expect("cppa trace is never empty").total;
    Ok((eps, out.signal.data().to_vec()))
}

fn solve_segment(
    m: &Manifold,
    anchors: &Anchors,
    l: usize,
    r: usize,
    model: &MSModel,
    warm: Option<&[f64]>,
) -> Result<(f64, Vec<f64>)> {
    match model.mode {
        MsMode::Potts => potts_segment(m, anchors, l, r, model.q, warm),
        MsMode::MumfordShah => ms_segment(m, anchors, l, r, model, warm),
    }
}

/// Best approximation error of the jump-free segment l..=r (inclusive,
/// 0-based) together with its minimizer. Potts mode fits one constant (Karcher
/// mean for q=2, geodesic median for q=1) and warm-starts from the first
/// point of `warm_start` when given; Mumford-Shah mode runs the cyclic
/// proximal solve of the L^q-V^p subproblem with `warm_start` as initial
/// signal, padded with its last point when shorter than the segment.
pub fn segment_error(
    f: &Signal,
    l: usize,
    r: usize,
    model: &MSModel,
    warm_start: Option<&Signal>,
) -> Result<(f64, Signal)> {
    model.validate()?;
    if !matches!(f.shape, SignalShape::One(_)) {
        return Err(MvrError::InvalidArgument("segment_error expects a univariate signal".into()));
    }
    let n = f.len();
    if l > r || r >= n {
        return Err(MvrError::InvalidArgument(format!(
            "segment [{l}, {r}] out of range for length {n}"
        )));
    }
    if let Some(w) = warm_start {
        if w.manifold != f.manifold {
            return Err(MvrError::ManifoldMismatch {
                left: w.manifold.name(),
                right: f.manifold.name(),
            });
        }
        if w.len() == 0 {
            return Err(MvrError::InvalidArgument("empty warm start".into()));
        }
    }
    let m = &f.manifold;
    let amb = m.ambient_dim();
    let views: Vec<&[f64]> = (0..n).map(|i| f.point(i)).collect();
    let anchors = [(views, 1.0)];
    let len = r - l + 1;
    let (eps, coords) = match model.mode {
        MsMode::Potts => {
            let warm = warm_start.map(|w| w.point(0));
            let (eps, h) = potts_segment(m, &anchors, l, r, model.q, warm)?;
            let mut all = Vec::with_capacity(len * amb);
            for _ in 0..len {
                all.extend_from_slice(&h);
            }
            (eps, all)
        }
        MsMode::MumfordShah => {
            let warm = warm_start.map(|w| w.data());
            ms_segment(m, &anchors, l, r, model, warm)?
        }
    };
    Ok((eps, Signal::from_coords(m.clone(), SignalShape::One(len), coords)?))
}

// ---------------------------------------------------------------------------
// univariate dynamic program

#[derive(Clone, Debug)]
pub struct DpOutput {
    pub signal: Signal,
    /// Indices i with a jump between samples i and i+1.
    pub jumps: Vec<usize>,
    pub energy: f64,
}

struct LineSolution {
    coords: Vec<f64>,
    energy: f64,
}

/// Margin under which a candidate segment start is considered prunable.
/// Potts segment errors are solved to ~1e-11, so a tiny margin keeps pruned
/// and unpruned runs identical; the proximal Mumford-Shah solves carry more
/// slack, so dominance must be clearer before skipping them.
fn prune_slack(model: &MSModel) -> f64 {
    match model.mode {
        MsMode::Potts => 1e-9,
        MsMode::MumfordShah => 1e-2 * (1.0 + model.gamma),
    }
}

/// The boundary recursion. Segment errors are monotone under extending the
/// segment to the right (they are minima of sums that only gain nonnegative
/// terms), so the last computed eps(l, ·) is a valid lower bound for every
/// later end, and a start l whose bound already loses by more than the
/// safety margin cannot enter the strict-improvement argmin.
fn dp_line(m: &Manifold, anchors: &Anchors, model: &MSModel, pruning: bool) -> Result<LineSolution> {
    let n = anchors[0].0.len();
    let amb = m.ambient_dim();
    let slack = prune_slack(model);
    let mut b = vec![0.0; n + 1];
    b[0] = -model.gamma;
    let mut arg = vec![0usize; n];
    let mut cache: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut lb = vec![0.0; n];
    for r in 0..n {
        let mut best = f64::INFINITY;
        let mut best_l = r;
        for l in (0..=r).rev() {
            if pruning && b[l] + model.gamma + lb[l] > best + slack {
                continue;
            }
            let warm = if model.mode == MsMode::Potts { cache[l].as_deref() } else { None };
            let (eps, h) = solve_segment(m, anchors, l, r, model, warm)?;
            if model.mode == MsMode::Potts {
                cache[l] = Some(h);
            }
            lb[l] = eps;
            let v = b[l] + model.gamma + eps;
            if v < best {
                best = v;
                best_l = l;
            }
        }
        b[r + 1] = best;
        arg[r] = best_l;
    }
    let mut coords = vec![0.0; n * amb];
    let mut end = n as i64 - 1;
    while end >= 0 {
        let r = end as usize;
        let l = arg[r];
        let warm = if model.mode == MsMode::Potts { cache[l].as_deref() } else { None };
        let (_, h) = solve_segment(m, anchors, l, r, model, warm)?;
        match model.mode {
            MsMode::Potts => {
                for i in l..=r {
                    coords[i * amb..(i + 1) * amb].copy_from_slice(&h);
                }
            }
            MsMode::MumfordShah => {
                coords[l * amb..(r + 1) * amb].copy_from_slice(&h);
            }
        }
        end = l as i64 - 1;
    }
    Ok(LineSolution { coords, energy: b[n] })
}

/// Globally optimal univariate Mumford-Shah / Potts restoration by dynamic
/// programming over segment boundaries, with pruning enabled.
pub fn dp_solve_1d(f: &Signal, model: &MSModel) -> Result<DpOutput> {
    dp_solve_1d_with(f, model, true)
}

/// [`dp_solve_1d`] with the pruning strategy switchable, for equivalence
/// checks; pruned and unpruned runs produce the same output.
pub fn dp_solve_1d_with(f: &Signal, model: &MSModel, pruning: bool) -> Result<DpOutput> {
    model.validate()?;
    if !matches!(f.shape, SignalShape::One(_)) {
        return Err(MvrError::InvalidArgument("dp_solve_1d expects a univariate signal".into()));
    }
    if f.len() == 0 {
        return Err(MvrError::InvalidArgument("empty signal".into()));
    }
    let m = &f.manifold;
    let views: Vec<&[f64]> = (0..f.len()).map(|i| f.point(i)).collect();
    let anchors = [(views, 1.0)];
    let sol = dp_line(m, &anchors, model, pruning)?;
    let signal = Signal::from_coords(m.clone(), f.shape, sol.coords)?;
    let jumps = jump_set(&signal, model);
    Ok(DpOutput { signal, jumps, energy: sol.energy })
}

// ---------------------------------------------------------------------------
// image splitting

/// Outer-iteration control of the split scheme. The coupling grows as
/// mu_k = mu0 * k^(q+1), which keeps sum mu_k^(-1/q) finite as the agreement
/// constraint requires.
#[derive(Clone, Copy, Debug)]
pub struct SplitSchedule {
    pub mu0: f64,
    pub max_outer: usize,
    /// Stop once the largest pairwise split disagreement falls below this.
    pub tol: f64,
}

impl SplitSchedule {
    pub fn for_model(model: &MSModel) -> Self {
        SplitSchedule { mu0: 1e-2 * model.alpha, max_outer: 500, tol: 1e-6 }
    }

    pub fn coupling(&self, k: usize, q: f64) -> f64 {
        self.mu0 * (k as f64).powf(q + 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu0 > 0.0 && self.mu0.is_finite()) {
            return Err(MvrError::InvalidArgument("mu0 must be positive".into()));
        }
        if self.max_outer == 0 {
            return Err(MvrError::InvalidArgument("max_outer must be at least 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(MvrError::InvalidArgument("tol must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SplitOutput {
    pub image: Signal,
    /// Largest pairwise split disagreement after each outer iteration.
    pub disagreement: Vec<f64>,
}

/// Pixel index chains of an image traversed along `dir`; every pixel lies on
/// exactly one chain.
fn direction_lines(rows: usize, cols: usize, dir: (i32, i32)) -> Vec<Vec<usize>> {
    let (di, dj) = (dir.0 as i64, dir.1 as i64);
    let (rows, cols) = (rows as i64, cols as i64);
    let mut lines = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            let (pi, pj) = (i - di, j - dj);
            if pi >= 0 && pi < rows && pj >= 0 && pj < cols {
                continue; // predecessor exists; not a chain start
            }
            let mut line = Vec::new();
            let (mut ci, mut cj) = (i, j);
            while ci >= 0 && ci < rows && cj >= 0 && cj < cols {
                line.push((ci * cols + cj) as usize);
                ci += di;
                cj += dj;
            }
            lines.push(line);
        }
    }
    lines
}

fn update_split(
    m: &Manifold,
    rows: usize,
    cols: usize,
    f: &Signal,
    prev: &Signal,
    mu: f64,
    dir: (i32, i32),
    line_model: &MSModel,
) -> Result<Signal> {
    // Dividing anchors and penalties by the total data weight leaves the
    // minimizer unchanged but keeps the proximal segment solves well
    // conditioned as the coupling grows.
    let total = 1.0 + mu;
    let scaled = MSModel {
        alpha: line_model.alpha / total,
        gamma: line_model.gamma / total,
        ..*line_model
    };
    let lines = direction_lines(rows, cols, dir);
    let solved: Vec<(Vec<usize>, Vec<f64>)> = lines
        .into_par_iter()
        .map(|line| -> Result<(Vec<usize>, Vec<f64>)> {
            let fviews: Vec<&[f64]> = line.iter().map(|&i| f.point(i)).collect();
            let zviews: Vec<&[f64]> = line.iter().map(|&i| prev.point(i)).collect();
            let anchors = [(fviews, 1.0 / total), (zviews, mu / total)];
            let sol = dp_line(m, &anchors, &scaled, true)?;
            Ok((line, sol.coords))
        })
        .collect::<Result<_>>()?;
    let amb = m.ambient_dim();
    let mut out = f.clone();
    for (line, coords) in solved {
        for (pos, &idx) in line.iter().enumerate() {
            out.set_point(idx, &coords[pos * amb..(pos + 1) * amb]);
        }
    }
    Ok(out)
}

/// Penalty-splitting solver for the image models: one split variable per
/// neighborhood direction, updated cyclically by per-line univariate dynamic
/// programs whose data term couples to the data f (weight 1) and to the
/// previously updated split (weight mu_k), with the line jump/variation
/// weights scaled by R * w_s for R directions. Returns the first split once
/// all splits agree within tol, along with the disagreement trace.
pub fn splitting_solve_2d(
    f: &Signal,
    model: &MSModel,
    ns: &NeighborhoodSystem,
    schedule: &SplitSchedule,
) -> Result<SplitOutput> {
    model.validate()?;
    ns.validate()?;
    schedule.validate()?;
    if ns.weights.iter().any(|w| *w <= 0.0) {
        return Err(MvrError::InvalidArgument(
            "splitting needs strictly positive direction weights".into(),
        ));
    }
    let (rows, cols) = match f.shape {
        SignalShape::Two(r, c) => (r, c),
        _ => return Err(MvrError::InvalidArgument("splitting_solve_2d expects an image".into())),
    };
    let m = f.manifold.clone();
    let big_r = ns.len();
    let mut splits: Vec<Signal> = vec![f.clone(); big_r];
    let mut disagreement = Vec::new();
    for k in 1..=schedule.max_outer {
        let mu = schedule.coupling(k, model.q);
        for s in 0..big_r {
            let prev = splits[(s + big_r - 1) % big_r].clone();
            let w = ns.weights[s];
            let scale = big_r as f64 * w;
            let line_model = MSModel {
                alpha: scale * model.alpha,
                gamma: scale * model.gamma,
                ..*model
            };
            splits[s] =
                update_split(&m, rows, cols, f, &prev, mu, ns.directions[s], &line_model)?;
        }
        let mut dis = 0.0_f64;
        for s in 0..big_r {
            let t = (s + 1) % big_r;
            for idx in 0..rows * cols {
                dis = dis.max(m.dist(splits[s].point(idx), splits[t].point(idx)));
            }
        }
        disagreement.push(dis);
        if dis <= schedule.tol {
            break;
        }
    }
    Ok(SplitOutput { image: splits[0].clone(), disagreement })
}
