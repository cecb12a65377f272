//! Interpolatory subdivision prediction, the tangent-space multiscale
//! transform built on it, sparsity-promoting energies over the detail
//! coefficients, and denoising drivers.
//!
//! A signal of length 2^R*k+1 is thinned dyadically; each level predicts the
//! in-between samples from the coarser one by a subdivision rule, and the
//! details are the scaled logarithms from prediction to actual sample. The
//! regularizers penalize detail size (weighted p-norms) or detail count.

use rayon::prelude::*;

use crate::atoms::{Atom, AtomKind, AtomRole};
use crate::error::{MvrError, Result};
use crate::higher_order::prox_by_descent;
use crate::inverse::{
    mean_data_atoms, mean_pullback, solve_inverse, ForwardOperator, InverseEngine,
};
use crate::manifold::diff::{adjoint_diff_of_map, grad_scalar_fd, GeodesicMap};
use crate::manifold::{Manifold, ManifoldPoint, TangentVector};
use crate::signal::{Signal, SignalShape};
use crate::solver::{cppa, fbs, fbs_traj, SolverOutput, SolverSchedule};
use crate::stats::{karcher_mean_coords_from, mean_schedule};
use crate::tv::{PairAtom, PairPenalty};

/// Detail norms at or below this threshold count as exactly zero.
const EPS0: f64 = 1e-12;

/// Mask of a stationary subdivision rule; entry k lives at `mask[center + k]`.
/// The even and the odd entries each sum to one. Interpolatory rules keep the
/// even grid fixed: the center entry is one and every other even entry zero.
#[derive(Clone, Debug)]
pub struct SubdivisionScheme {
    mask: Vec<f64>,
    center: usize,
    pub interpolatory: bool,
}

impl SubdivisionScheme {
    pub fn new(mask: Vec<f64>, center: usize) -> Result<Self> {
        if mask.is_empty() || center >= mask.len() || mask.iter().any(|c| !c.is_finite()) {
            return Err(MvrError::InvalidArgument(
                "subdivision mask must be a finite sequence containing its center".into(),
            ));
        }
        let mut sums = [0.0_f64; 2];
        for (i, c) in mask.iter().enumerate() {
            let k = i as isize - center as isize;
            sums[k.rem_euclid(2) as usize] += c;
        }
        if (sums[0] - 1.0).abs() > 1e-12 || (sums[1] - 1.0).abs() > 1e-12 {
            return Err(MvrError::InvalidArgument(
                "even and odd mask entries must each sum to one".into(),
            ));
        }
        let interpolatory = mask.iter().enumerate().all(|(i, &c)| {
            let k = i as isize - center as isize;
            if k % 2 != 0 {
                true
            } else if k == 0 {
                (c - 1.0).abs() < 1e-15
            } else {
                c.abs() < 1e-15
            }
        });
        Ok(SubdivisionScheme { mask, center, interpolatory })
    }

    /// Linear rule inserting the geodesic midpoint between neighbors.
    pub fn midpoint() -> Self {
        Self::new(vec![0.5, 1.0, 0.5], 1).unwrap()
    }

    /// Cubic Deslauriers-Dubuc rule: odd weights -1/16, 9/16, 9/16, -1/16.
    pub fn dd3() -> Self {
        let s = 1.0 / 16.0;
        Self::new(vec![-s, 0.0, 9.0 * s, 1.0, 9.0 * s, 0.0, -s], 3).unwrap()
    }

    /// Nonzero odd mask entries as (offset, weight) pairs.
    fn odd_taps(&self) -> Vec<(isize, f64)> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &c)| {
                let k = i as isize - self.center as isize;
                (k % 2 != 0 && c != 0.0).then_some((k, c))
            })
            .collect()
    }

    /// Number of coarse samples an interior odd output draws from.
    pub fn support(&self) -> usize {
        self.odd_taps().len()
    }
}

/// Prediction weights for the odd output between coarse samples `cell` and
/// `cell + 1`, sorted by index. Out-of-range taps are dropped and the rest
/// renormalized so the weights always sum to one.
fn odd_weights(scheme: &SubdivisionScheme, cell: usize, len: usize) -> Result<Vec<(usize, f64)>> {
    let mut picked = Vec::new();
    let mut sum = 0.0;
    for (k, c) in scheme.odd_taps() {
        // output index 2*cell + 1 reads coarse j with offset k = (2*cell+1) - 2j
        let j = cell as isize + (1 - k) / 2;
        if (0..len as isize).contains(&j) {
            picked.push((j as usize, c));
            sum += c;
        }
    }
    if picked.is_empty() || sum.abs() < 1e-9 {
        return Err(MvrError::InvalidArgument(
            "subdivision mask support collapses at the boundary".into(),
        ));
    }
    for (_, c) in &mut picked {
        *c /= sum;
    }
    picked.sort_by_key(|&(j, _)| j);
    Ok(picked)
}

/// Signed-weight means contract slower than convex ones; give the prediction
/// solver more room than the plain mean default.
fn predict_schedule() -> SolverSchedule {
    SolverSchedule {
        max_iters: 500,
        ..mean_schedule()
    }
}

/// Weighted prediction point; two half weights reduce to the closed-form
/// geodesic midpoint, anything else runs a weighted mean warm-started at the
/// heaviest tap (mask weights may be negative).
fn predict_core(m: &Manifold, pts: &[&[f64]], ws: &[f64]) -> Result<Vec<f64>> {
    if pts.len() == 2 && (ws[0] - 0.5).abs() < 1e-15 && (ws[1] - 0.5).abs() < 1e-15 {
        return Ok(m.geopoint(pts[0], pts[1], 0.5).value);
    }
    let lead = ws
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap();
    let (c, _) = karcher_mean_coords_from(m, Some(pts[lead]), pts, ws, &predict_schedule())?;
    Ok(c)
}

/// One round of dyadic refinement: even outputs copy the coarse samples, odd
/// outputs are the mask predictions. A signal of length n refines to 2n-1.
pub fn subdivide(coarse: &Signal, scheme: &SubdivisionScheme) -> Result<Signal> {
    if !scheme.interpolatory {
        return Err(MvrError::InvalidArgument(
            "refinement requires an interpolatory mask".into(),
        ));
    }
    let n = match coarse.shape {
        SignalShape::One(n) => n,
        SignalShape::Two(..) => {
            return Err(MvrError::InvalidArgument(
                "subdivision refines one-dimensional signals".into(),
            ))
        }
    };
    if n < 2 || n < scheme.support() {
        return Err(MvrError::InvalidArgument(
            "coarse signal shorter than the mask support".into(),
        ));
    }
    let m = &coarse.manifold;
    let odds: Vec<Vec<f64>> = (0..n - 1)
        .into_par_iter()
        .map(|cell| -> Result<Vec<f64>> {
            let taps = odd_weights(scheme, cell, n)?;
            let pts: Vec<&[f64]> = taps.iter().map(|&(j, _)| coarse.point(j)).collect();
            let ws: Vec<f64> = taps.iter().map(|&(_, w)| w).collect();
            predict_core(m, &pts, &ws)
        })
        .collect::<Result<_>>()?;
    let mut data = Vec::with_capacity((2 * n - 1) * m.ambient_dim());
    for i in 0..2 * n - 1 {
        if i % 2 == 0 {
            data.extend_from_slice(coarse.point(i / 2));
        } else {
            data.extend_from_slice(&odds[i / 2]);
        }
    }
    Signal::from_coords(m.clone(), SignalShape::One(2 * n - 1), data)
}

/// Multiscale decomposition: the coarsest thinning plus, per level, the
/// tangent vectors from each prediction to the actual sample, scaled by
/// 2^{-r/2} at level r.
#[derive(Clone, Debug)]
pub struct WaveletPyramid {
    pub coarse: Signal,
    /// `details[r-1]` holds level-r details ordered by cell; the vector at
    /// slot i is based at the prediction for fine sample 2i+1 of that level.
    pub details: Vec<Vec<TangentVector>>,
    pub scheme: SubdivisionScheme,
}

impl WaveletPyramid {
    pub fn levels(&self) -> usize {
        self.details.len()
    }
}

/// Number of samples left after `levels` dyadic thinnings, or an error when
/// the length is not of the form 2^levels * k + 1.
fn coarse_count(len: usize, levels: usize) -> Result<usize> {
    if levels == 0 || levels > 32 {
        return Err(MvrError::InvalidArgument(
            "level count must be between 1 and 32".into(),
        ));
    }
    let step = 1usize << levels;
    if len < step + 1 || (len - 1) % step != 0 {
        return Err(MvrError::InvalidArgument(format!(
            "length {len} does not support {levels} dyadic levels; need 2^{levels}*k+1"
        )));
    }
    Ok((len - 1) / step + 1)
}

pub fn wavelet_analyze(
    u: &Signal,
    scheme: &SubdivisionScheme,
    levels: usize,
) -> Result<WaveletPyramid> {
    if !scheme.interpolatory {
        return Err(MvrError::InvalidArgument(
            "the transform requires an interpolatory mask".into(),
        ));
    }
    let n = match u.shape {
        SignalShape::One(n) => n,
        SignalShape::Two(..) => {
            return Err(MvrError::InvalidArgument(
                "the multiscale transform is one-dimensional".into(),
            ))
        }
    };
    let n0 = coarse_count(n, levels)?;
    if n0 < scheme.support() {
        return Err(MvrError::InvalidArgument(
            "coarse level shorter than the mask support; lower the level count".into(),
        ));
    }
    let m = &u.manifold;
    let mut details = Vec::with_capacity(levels);
    for r in 1..=levels {
        let cstep = 1usize << (levels - r + 1);
        let fstep = cstep >> 1;
        let clen = (n - 1) / cstep + 1;
        let cpts: Vec<&[f64]> = (0..clen).map(|j| u.point(j * cstep)).collect();
        let scale = (2.0_f64).powf(-(r as f64) / 2.0);
        let lvl: Vec<TangentVector> = (0..clen - 1)
            .into_par_iter()
            .map(|cell| -> Result<TangentVector> {
                let taps = odd_weights(scheme, cell, clen)?;
                let pts: Vec<&[f64]> = taps.iter().map(|&(j, _)| cpts[j]).collect();
                let ws: Vec<f64> = taps.iter().map(|&(_, w)| w).collect();
                let pred = predict_core(m, &pts, &ws)?;
                let actual = u.point((2 * cell + 1) * fstep);
                let lg = m.log(&pred, actual);
                if lg.non_unique {
                    return Err(MvrError::CutLocus(format!(
                        "detail at level {r}, cell {cell}: prediction and sample are cut points"
                    )));
                }
                let v: Vec<f64> = lg.value.iter().map(|c| scale * c).collect();
                Ok(TangentVector::new_unchecked(
                    ManifoldPoint::new_unchecked(m.clone(), pred),
                    v,
                ))
            })
            .collect::<Result<_>>()?;
        details.push(lvl);
    }
    let step = 1usize << levels;
    let mut cdata = Vec::with_capacity(n0 * m.ambient_dim());
    for i in 0..n0 {
        cdata.extend_from_slice(u.point(i * step));
    }
    let coarse = Signal::from_coords(m.clone(), SignalShape::One(n0), cdata)?;
    Ok(WaveletPyramid { coarse, details, scheme: scheme.clone() })
}

/// Inverse transform: refine the coarse signal level by level, displacing
/// each predicted sample by its stored detail scaled back up by 2^{r/2}.
/// Predictions are recomputed on the way up, so edited pyramids resolve
/// against the bases the edit implies rather than stale stored ones.
pub fn wavelet_synthesize(pyr: &WaveletPyramid) -> Result<Signal> {
    let m = pyr.coarse.manifold.clone();
    let amb = m.ambient_dim();
    let mut current = pyr.coarse.clone();
    for (i, lvl) in pyr.details.iter().enumerate() {
        let r = i + 1;
        if lvl.len() + 1 != current.len() {
            return Err(MvrError::InvalidArgument(format!(
                "level {r} carries {} details for {} cells",
                lvl.len(),
                current.len() - 1
            )));
        }
        let refined = subdivide(&current, &pyr.scheme)?;
        let scale = (2.0_f64).powf(r as f64 / 2.0);
        let mut data = Vec::with_capacity(refined.len() * amb);
        for idx in 0..refined.len() {
            if idx % 2 == 0 {
                data.extend_from_slice(refined.point(idx));
            } else {
                let base = refined.point(idx);
                let mut v: Vec<f64> = lvl[idx / 2].coeffs.iter().map(|c| scale * c).collect();
                m.project_tangent(base, &mut v);
                data.extend_from_slice(&m.exp(base, &v));
            }
        }
        current = Signal::from_coords(m.clone(), SignalShape::One(refined.len()), data)?;
    }
    Ok(current)
}

/// Smallest length of the form 2^levels * k + 1 that is >= len.
fn padded_len(len: usize, levels: usize) -> usize {
    let step = 1usize << levels;
    let k = if len <= step + 1 { 1 } else { (len - 2) / step + 1 };
    step * k + 1
}

/// Extends a signal past its right boundary by geodesic point reflection
/// through the final sample until the length supports `levels` refinements.
/// Already compatible signals come back as plain copies.
pub fn pad_to_levels(u: &Signal, levels: usize) -> Result<Signal> {
    let n = match u.shape {
        SignalShape::One(n) => n,
        SignalShape::Two(..) => {
            return Err(MvrError::InvalidArgument(
                "reflection padding applies to one-dimensional signals".into(),
            ))
        }
    };
    if n < 2 {
        return Err(MvrError::InvalidArgument(
            "need at least two samples to pad".into(),
        ));
    }
    let target = padded_len(n, levels);
    if target == n {
        return Ok(u.clone());
    }
    if target - n > n - 1 {
        return Err(MvrError::InvalidArgument(format!(
            "cannot reflect-pad a length {n} signal to {levels} levels"
        )));
    }
    let m = &u.manifold;
    let mut data = u.data().to_vec();
    for k in 1..=target - n {
        data.extend(m.geopoint(u.point(n - 1 - k), u.point(n - 1), 2.0).value);
    }
    Signal::from_coords(m.clone(), SignalShape::One(target), data)
}

/// Detail-norm regularizer: alpha1 * sum over levels and cells of
/// 2^{r p (mu + 1/2 - 1/p)} ||d||^p plus alpha2 * sum of coarse neighbor
/// distances to the p. Signals of incompatible length are reflection-padded
/// first.
pub fn w_energy(
    u: &Signal,
    alpha: (f64, f64),
    mu: f64,
    p: f64,
    scheme: &SubdivisionScheme,
    levels: usize,
) -> Result<f64> {
    if p < 1.0 || !p.is_finite() || !mu.is_finite() {
        return Err(MvrError::InvalidArgument(
            "need a finite smoothness weight and a norm exponent >= 1".into(),
        ));
    }
    let padded = pad_to_levels(u, levels)?;
    let pyr = wavelet_analyze(&padded, scheme, levels)?;
    let mut detail = 0.0;
    for (i, lvl) in pyr.details.iter().enumerate() {
        let r = (i + 1) as f64;
        let w = (2.0_f64).powf(r * p * (mu + 0.5 - 1.0 / p));
        for d in lvl {
            detail += w * d.norm().powf(p);
        }
    }
    let m = &pyr.coarse.manifold;
    let coarse: f64 = (1..pyr.coarse.len())
        .map(|i| m.dist(pyr.coarse.point(i - 1), pyr.coarse.point(i)).powf(p))
        .sum();
    Ok(alpha.0 * detail + alpha.1 * coarse)
}

/// Counting regularizer: alpha1 * #(details with norm > 1e-12) plus
/// alpha2 * #(coarse neighbor pairs further apart than 1e-12).
pub fn w0_energy(
    u: &Signal,
    alpha: (f64, f64),
    scheme: &SubdivisionScheme,
    levels: usize,
) -> Result<f64> {
    let padded = pad_to_levels(u, levels)?;
    let pyr = wavelet_analyze(&padded, scheme, levels)?;
    let details = pyr
        .details
        .iter()
        .flatten()
        .filter(|d| d.norm() > EPS0)
        .count();
    let m = &pyr.coarse.manifold;
    let coarse = (1..pyr.coarse.len())
        .filter(|&i| m.dist(pyr.coarse.point(i - 1), pyr.coarse.point(i)) > EPS0)
        .count();
    Ok(alpha.0 * details as f64 + alpha.1 * coarse as f64)
}

/// Which penalty the sparse regularizer puts on the detail coefficients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WaveletPenalty {
    /// Weighted p-norms of the details; mu is the smoothness weight in the
    /// 2^{r p (mu + 1/2 - 1/p)} level factor.
    Norm { mu: f64, p: f64 },
    /// Number of nonzero details.
    Count,
}

#[derive(Clone, Debug)]
pub struct WaveletModel {
    /// (detail weight, coarse-difference weight)
    pub alpha: (f64, f64),
    pub penalty: WaveletPenalty,
    pub scheme: SubdivisionScheme,
    pub levels: usize,
}

impl WaveletModel {
    /// The sparse-coefficient workhorse: p = 1, mu = 1, so every level's
    /// detail norm is penalized with the same weight alpha1.
    pub fn lasso(alpha: (f64, f64), scheme: SubdivisionScheme, levels: usize) -> Self {
        WaveletModel { alpha, penalty: WaveletPenalty::Norm { mu: 1.0, p: 1.0 }, scheme, levels }
    }

    pub fn sparse(alpha: (f64, f64), scheme: SubdivisionScheme, levels: usize) -> Self {
        WaveletModel { alpha, penalty: WaveletPenalty::Count, scheme, levels }
    }

    fn validate(&self) -> Result<()> {
        if self.alpha.0 < 0.0 || self.alpha.1 < 0.0 {
            return Err(MvrError::InvalidArgument(
                "regularization weights must be nonnegative".into(),
            ));
        }
        if let WaveletPenalty::Norm { mu, p } = self.penalty {
            if !mu.is_finite() || (p != 1.0 && p != 2.0) {
                return Err(MvrError::InvalidArgument(
                    "the norm penalty supports p in {1, 2} and finite mu".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One detail coefficient's energy share. Norm mode: weight * dist^p between
/// prediction and sample, with the 2^{-r/2} detail scaling and the level
/// factor folded into `weight`. Count mode: weight when the detail is
/// nonzero.
struct DetailAtom {
    manifold: Manifold,
    /// fine sample the detail points to, in full-signal indexing
    target: usize,
    /// coarse full-signal indices with renormalized prediction weights
    sources: Vec<(usize, f64)>,
    weight: f64,
    p: f64,
    count: bool,
    /// 2^{-r/2}, the stored-detail scaling; only the Count threshold needs it
    dscale: f64,
}

impl DetailAtom {
    fn prediction(&self, srcs: &[&[f64]]) -> Result<Vec<f64>> {
        let ws: Vec<f64> = self.sources.iter().map(|&(_, w)| w).collect();
        predict_core(&self.manifold, srcs, &ws)
    }

    fn source_views<'a>(&self, u: &'a Signal) -> Vec<&'a [f64]> {
        self.sources.iter().map(|&(j, _)| u.point(j)).collect()
    }

    fn value_core(&self, srcs: &[&[f64]], tgt: &[f64]) -> Result<f64> {
        let pred = self.prediction(srcs)?;
        let d = self.manifold.dist(&pred, tgt);
        if self.count {
            Ok(if self.dscale * d > EPS0 { self.weight } else { 0.0 })
        } else {
            Ok(self.weight * d.powf(self.p))
        }
    }

    /// Ascent gradients in block order (sources then target); None when the
    /// detail sits at the kink of the norm.
    fn gradient_blocks(&self, srcs: &[&[f64]], tgt: &[f64]) -> Result<Option<Vec<Vec<f64>>>> {
        let m = &self.manifold;
        let pred = self.prediction(srcs)?;
        let d = m.dist(&pred, tgt);
        if d < EPS0 {
            return Ok(None);
        }
        let fac = self.weight * self.p * d.powf(self.p - 2.0);
        let lg_t = m.log(tgt, &pred);
        let lg_p = m.log(&pred, tgt);
        if lg_t.non_unique || lg_p.non_unique {
            return Err(MvrError::CutLocus(
                "detail prediction and sample are cut points".into(),
            ));
        }
        let cot: Vec<f64> = lg_p.value.iter().map(|c| -fac * c).collect();
        let mut blocks = self.pullbacks(srcs, &pred, &cot, tgt)?;
        blocks.push(lg_t.value.iter().map(|c| -fac * c).collect());
        Ok(Some(blocks))
    }

    /// Pulls a cotangent at the prediction back to the source samples:
    /// closed-form geodesic adjoints for the midpoint rule, the implicit
    /// mean linearization otherwise, finite differences when that system
    /// is singular.
    fn pullbacks(
        &self,
        srcs: &[&[f64]],
        pred: &[f64],
        cot: &[f64],
        tgt: &[f64],
    ) -> Result<Vec<Vec<f64>>> {
        let m = &self.manifold;
        let ws: Vec<f64> = self.sources.iter().map(|&(_, w)| w).collect();
        if srcs.len() == 2 && (ws[0] - 0.5).abs() < 1e-15 && (ws[1] - 0.5).abs() < 1e-15 {
            let ga = adjoint_diff_of_map(m, GeodesicMap::GeoFirst(0.5), srcs[0], srcs[1], cot)?;
            let gb = adjoint_diff_of_map(m, GeodesicMap::GeoSecond(0.5), srcs[0], srcs[1], cot)?;
            return Ok(vec![ga, gb]);
        }
        match mean_pullback(m, srcs, &ws, pred, cot) {
            Ok(p) => Ok(p),
            Err(MvrError::SingularSystem { .. }) => {
                let mut out = Vec::with_capacity(srcs.len());
                for j in 0..srcs.len() {
                    let phi = |pt: &[f64]| -> Result<f64> {
                        let moved: Vec<&[f64]> = srcs
                            .iter()
                            .enumerate()
                            .map(|(t, &s)| if t == j { pt } else { s })
                            .collect();
                        let (c, _) = karcher_mean_coords_from(
                            m,
                            Some(pred),
                            &moved,
                            &ws,
                            &predict_schedule(),
                        )?;
                        Ok(self.weight * m.dist(&c, tgt).powf(self.p))
                    };
                    out.push(grad_scalar_fd(m, &phi, srcs[j], 1e-6)?);
                }
                Ok(out)
            }
            Err(e) => Err(e),
        }
    }
}

impl Atom for DetailAtom {
    fn role(&self) -> AtomRole {
        AtomRole::Regularizer
    }

    fn kind(&self) -> AtomKind {
        if self.count {
            AtomKind::Proximable
        } else {
            AtomKind::Both
        }
    }

    fn footprint(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.sources.iter().map(|&(j, _)| j).collect();
        f.push(self.target);
        f.sort_unstable();
        f
    }

    fn evaluate(&self, u: &Signal) -> f64 {
        let srcs = self.source_views(u);
        self.value_core(&srcs, u.point(self.target)).unwrap_or(f64::INFINITY)
    }

    fn grad(&self, u: &Signal) -> Result<Vec<(usize, Vec<f64>)>> {
        if self.count {
            return Err(MvrError::InvalidArgument(
                "counting penalties have no usable subgradient".into(),
            ));
        }
        let srcs = self.source_views(u);
        match self.gradient_blocks(&srcs, u.point(self.target))? {
            None => Ok(Vec::new()),
            Some(blocks) => {
                let mut out: Vec<(usize, Vec<f64>)> = self
                    .sources
                    .iter()
                    .zip(&blocks)
                    .map(|(&(j, _), g)| (j, g.clone()))
                    .collect();
                out.push((self.target, blocks.last().unwrap().clone()));
                Ok(out)
            }
        }
    }

    fn prox(&self, u: &mut Signal, lambda: f64) -> Result<()> {
        if lambda < 0.0 || !lambda.is_finite() {
            return Err(MvrError::InvalidArgument("negative prox step".into()));
        }
        if lambda == 0.0 {
            return Ok(());
        }
        let m = self.manifold.clone();
        let srcs = self.source_views(u);
        if self.count {
            // keep-or-kill: either pay the counting weight or collapse the
            // sample onto its prediction; ties go to the sparser kill
            let pred = self.prediction(&srcs)?;
            let d = m.dist(&pred, u.point(self.target));
            if self.dscale * d <= EPS0 {
                return Ok(());
            }
            if d * d / (2.0 * lambda) <= self.weight + 1e-12 {
                u.set_point(self.target, &pred);
            }
            return Ok(());
        }
        let block: Vec<usize> = self
            .sources
            .iter()
            .map(|&(j, _)| j)
            .chain([self.target])
            .collect();
        let h: Vec<&[f64]> = block.iter().map(|&i| u.point(i)).collect();
        let amb = m.ambient_dim();
        let term = |x: &[Vec<f64>]| -> Result<f64> {
            let (tgt, srcs) = x.split_last().unwrap();
            let views: Vec<&[f64]> = srcs.iter().map(|v| v.as_slice()).collect();
            self.value_core(&views, tgt)
        };
        let term_grad = |x: &[Vec<f64>]| -> Result<Vec<Vec<f64>>> {
            let (tgt, srcs) = x.split_last().unwrap();
            let views: Vec<&[f64]> = srcs.iter().map(|v| v.as_slice()).collect();
            match self.gradient_blocks(&views, tgt)? {
                Some(blocks) => Ok(blocks),
                None => Ok(vec![vec![0.0; amb]; x.len()]),
            }
        };
        let best = prox_by_descent(&m, &h, lambda, &term, &term_grad)?;
        for (i, coords) in block.iter().zip(&best) {
            u.set_point(*i, coords);
        }
        Ok(())
    }
}

/// Counting penalty on one coarse-level neighbor pair.
struct CoarseCountAtom {
    manifold: Manifold,
    left: usize,
    right: usize,
    weight: f64,
}

impl Atom for CoarseCountAtom {
    fn role(&self) -> AtomRole {
        AtomRole::Regularizer
    }

    fn kind(&self) -> AtomKind {
        AtomKind::Proximable
    }

    fn footprint(&self) -> Vec<usize> {
        vec![self.left, self.right]
    }

    fn evaluate(&self, u: &Signal) -> f64 {
        let d = self.manifold.dist(u.point(self.left), u.point(self.right));
        if d > EPS0 {
            self.weight
        } else {
            0.0
        }
    }

    fn grad(&self, _u: &Signal) -> Result<Vec<(usize, Vec<f64>)>> {
        Err(MvrError::InvalidArgument(
            "counting penalties have no usable subgradient".into(),
        ))
    }

    fn prox(&self, u: &mut Signal, lambda: f64) -> Result<()> {
        if lambda < 0.0 || !lambda.is_finite() {
            return Err(MvrError::InvalidArgument("negative prox step".into()));
        }
        if lambda == 0.0 {
            return Ok(());
        }
        let m = &self.manifold;
        let d = m.dist(u.point(self.left), u.point(self.right));
        if d <= EPS0 {
            return Ok(());
        }
        // merging both ends at their midpoint costs 2*(d/2)^2/(2 lambda)
        if d * d / (4.0 * lambda) <= self.weight + 1e-12 {
            let mid = m.geopoint(u.point(self.left), u.point(self.right), 0.5).value;
            u.set_point(self.left, &mid);
            u.set_point(self.right, &mid);
        }
        Ok(())
    }
}

/// Regularizer atoms over a signal of (padded) length `len`: one atom per
/// detail coefficient plus the coarse-difference chain.
pub fn wavelet_atoms(
    m: &Manifold,
    len: usize,
    model: &WaveletModel,
) -> Result<Vec<Box<dyn Atom>>> {
    model.validate()?;
    let n0 = coarse_count(len, model.levels)?;
    if n0 < model.scheme.support() {
        return Err(MvrError::InvalidArgument(
            "coarse level shorter than the mask support; lower the level count".into(),
        ));
    }
    let mut atoms: Vec<Box<dyn Atom>> = Vec::new();
    if model.alpha.0 > 0.0 {
        for r in 1..=model.levels {
            let cstep = 1usize << (model.levels - r + 1);
            let fstep = cstep >> 1;
            let clen = (len - 1) / cstep + 1;
            let (weight, p) = match model.penalty {
                WaveletPenalty::Norm { mu, p } => {
                    (model.alpha.0 * (2.0_f64).powf(r as f64 * (p * mu - 1.0)), p)
                }
                WaveletPenalty::Count => (model.alpha.0, 1.0),
            };
            for cell in 0..clen - 1 {
                let sources: Vec<(usize, f64)> = odd_weights(&model.scheme, cell, clen)?
                    .into_iter()
                    .map(|(j, w)| (j * cstep, w))
                    .collect();
                atoms.push(Box::new(DetailAtom {
                    manifold: m.clone(),
                    target: (2 * cell + 1) * fstep,
                    sources,
                    weight,
                    p,
                    count: model.penalty == WaveletPenalty::Count,
                    dscale: (2.0_f64).powf(-(r as f64) / 2.0),
                }));
            }
        }
    }
    if model.alpha.1 > 0.0 {
        let step = 1usize << model.levels;
        match model.penalty {
            WaveletPenalty::Norm { p, .. } => {
                let pen = if p == 1.0 { PairPenalty::Abs } else { PairPenalty::Quadratic };
                let pairs: Vec<(usize, usize)> =
                    (1..n0).map(|i| ((i - 1) * step, i * step)).collect();
                atoms.push(Box::new(PairAtom::new(pairs, model.alpha.1, pen)));
            }
            WaveletPenalty::Count => {
                for i in 1..n0 {
                    atoms.push(Box::new(CoarseCountAtom {
                        manifold: m.clone(),
                        left: (i - 1) * step,
                        right: i * step,
                        weight: model.alpha.1,
                    }));
                }
            }
        }
    }
    Ok(atoms)
}

fn truncate_signal(u: &Signal, n: usize) -> Result<Signal> {
    let mut data = Vec::with_capacity(n * u.manifold.ambient_dim());
    for i in 0..n {
        data.extend_from_slice(u.point(i));
    }
    Signal::from_coords(u.manifold.clone(), SignalShape::One(n), data)
}

/// Sparse multiscale reconstruction: (1/q) d(A u, f)^q plus the model's
/// detail penalty. Without an operator this is denoising; the input is
/// reflection-padded to a transform-compatible length, padded slots carry no
/// data term, and the output is trimmed back.
pub fn denoise_wavelet(
    f: &Signal,
    op: Option<&ForwardOperator>,
    model: &WaveletModel,
    q: f64,
    schedule: &SolverSchedule,
    engine: InverseEngine,
) -> Result<SolverOutput> {
    model.validate()?;
    match op {
        Some(a) => {
            let reg = wavelet_atoms(&f.manifold, a.cols(), model)?;
            solve_inverse(a, f, q, reg, None, schedule, engine)
        }
        None => {
            let n = match f.shape {
                SignalShape::One(n) => n,
                SignalShape::Two(..) => {
                    return Err(MvrError::InvalidArgument(
                        "multiscale denoising is one-dimensional".into(),
                    ))
                }
            };
            let padded = pad_to_levels(f, model.levels)?;
            let id = ForwardOperator::identity(padded.len());
            let mut data_atoms = mean_data_atoms(&id, &padded, q)?;
            data_atoms.truncate(n);
            let reg = wavelet_atoms(&f.manifold, padded.len(), model)?;
            let out = match engine {
                InverseEngine::Fbs => fbs(&data_atoms, &reg, &padded, schedule)?,
                InverseEngine::FbsTraj => fbs_traj(&data_atoms, &reg, &padded, schedule)?,
                InverseEngine::Cppa => {
                    let mut all = data_atoms;
                    all.extend(reg);
                    cppa(&all, &padded, schedule)?
                }
            };
            Ok(SolverOutput { signal: truncate_signal(&out.signal, n)?, trace: out.trace })
        }
    }
}
