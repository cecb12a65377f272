//! Indirect measurements of manifold-valued signals: imaging operators that
//! push the unknown through weighted geodesic means, the data atoms and
//! gradients they induce, and reconstruction drivers combining them with the
//! regularizers of the other modules.
//!
//! A measurement row with weights a_i. maps u to the weighted center of mass
//! of (u_j) under those weights; the data term per row is
//! (1/q) d(mean(a_i., u), f_i)^q. Gradients flow through the implicit mean
//! map by differentiating its first-order optimality condition
//! sum_j a_ij log_m(u_j) = 0; when that tangent system is ill conditioned
//! the gradient falls back to finite differences with warm-started means.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::atoms::{Atom, AtomKind, AtomRole};
use crate::error::{MvrError, Result};
use crate::manifold::diff::{adjoint_diff_of_map, grad_scalar_fd, GeodesicMap};
use crate::manifold::Manifold;
use crate::prox::{prox_data, ProxParams, ProxVariant};
use crate::signal::{Signal, SignalShape};
use crate::solver::{cppa, fbs, fbs_traj, SolverOutput, SolverSchedule};
use crate::stats::{karcher_mean_coords_from, mean_schedule};

/// Condition number of the mean-map tangent system beyond which gradients
/// switch to the finite-difference path.
const IMPLICIT_COND_LIMIT: f64 = 1e8;

/// Dense K x N measurement matrix with unit row sums. Entries may be
/// negative; only the row normalization is required for the weighted means
/// to generalize the euclidean matrix-vector product.
#[derive(Clone, Debug)]
pub struct ForwardOperator {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
    support: Vec<Vec<usize>>,
    /// Half-width of the band for convolution-type operators, None for
    /// unstructured matrices.
    pub bandwidth: Option<usize>,
}

impl ForwardOperator {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || entries.len() != rows * cols {
            return Err(MvrError::InvalidArgument(format!(
                "operator wants rows*cols entries, got {} for {rows}x{cols}",
                entries.len()
            )));
        }
        if entries.iter().any(|e| !e.is_finite()) {
            return Err(MvrError::InvalidArgument("operator entries must be finite".into()));
        }
        for i in 0..rows {
            let s: f64 = entries[i * cols..(i + 1) * cols].iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(MvrError::InvalidArgument(format!(
                    "operator row {i} sums to {s}, expected unit row sums"
                )));
            }
        }
        let support = (0..rows)
            .map(|i| (0..cols).filter(|j| entries[i * cols + j] != 0.0).collect())
            .collect();
        Ok(Self { rows, cols, entries, support, bandwidth: None })
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        let mut op = Self::new(n, n, entries).expect("identity rows sum to one");
        op.bandwidth = Some(0);
        op
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    /// Column indices with nonzero weight in row `i`.
    pub fn support(&self, i: usize) -> &[usize] {
        &self.support[i]
    }

    /// Kronecker product acting on row-major serialized images: `self`
    /// mixes the image rows, `other` the image columns. A separable 2-D
    /// kernel is the product of its two 1-D factors.
    pub fn kron(&self, other: &ForwardOperator) -> ForwardOperator {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let mut entries = vec![0.0; rows * cols];
        for ia in 0..self.rows {
            for ib in 0..other.rows {
                let i = ia * other.rows + ib;
                for ja in 0..self.cols {
                    let wa = self.entry(ia, ja);
                    if wa == 0.0 {
                        continue;
                    }
                    for jb in 0..other.cols {
                        entries[i * cols + ja * other.cols + jb] = wa * other.entry(ib, jb);
                    }
                }
            }
        }
        Self::new(rows, cols, entries).expect("products of unit row sums stay normalized")
    }
}

/// Banded convolution with a sampled Gaussian; boundary rows renormalize
/// over the in-range taps. Width 1 degenerates to the identity.
pub fn gaussian_kernel_operator(n: usize, sigma: f64, width: usize) -> Result<ForwardOperator> {
    if n == 0 {
        return Err(MvrError::InvalidArgument("empty operator".into()));
    }
    if width == 0 || width % 2 == 0 {
        return Err(MvrError::InvalidArgument(format!("kernel width {width} must be odd")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(MvrError::InvalidArgument(format!("kernel sigma {sigma} must be positive")));
    }
    let h = (width / 2) as i64;
    let mut entries = vec![0.0; n * n];
    for i in 0..n as i64 {
        let mut total = 0.0;
        for k in -h..=h {
            let j = i + k;
            if j < 0 || j >= n as i64 {
                continue;
            }
            let w = (-(k * k) as f64 / (2.0 * sigma * sigma)).exp();
            entries[i as usize * n + j as usize] = w;
            total += w;
        }
        for j in 0..n {
            entries[i as usize * n + j] /= total;
        }
    }
    let mut op = ForwardOperator::new(n, n, entries)?;
    op.bandwidth = Some(h as usize);
    Ok(op)
}

fn relabel_row(row: usize) -> impl Fn(MvrError) -> MvrError {
    move |e| match e {
        MvrError::NoConvergence { residual, iters, last, .. } => MvrError::NoConvergence {
            context: format!("measurement row {row} mean"),
            residual,
            iters,
            last,
        },
        other => other,
    }
}

fn row_mean(
    m: &Manifold,
    op: &ForwardOperator,
    row: usize,
    u: &Signal,
    warm: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let sup = op.support(row);
    if sup.len() == 1 && (op.entry(row, sup[0]) - 1.0).abs() < 1e-15 {
        return Ok(u.point(sup[0]).to_vec());
    }
    let pts: Vec<&[f64]> = sup.iter().map(|&j| u.point(j)).collect();
    let ws: Vec<f64> = sup.iter().map(|&j| op.entry(row, j)).collect();
    karcher_mean_coords_from(m, warm, &pts, &ws, &mean_schedule())
        .map(|(c, _)| c)
        .map_err(relabel_row(row))
}

/// Applies the operator row by row: component i is the weighted center of
/// mass of `u` under row i. On euclidean factors this is exactly the
/// matrix-vector product. Keeps the input shape when K = N so that
/// serialized image operators return images.
pub fn forward_apply(op: &ForwardOperator, u: &Signal) -> Result<Signal> {
    if u.len() != op.cols() {
        return Err(MvrError::InvalidArgument(format!(
            "operator expects {} samples, signal has {}",
            op.cols(),
            u.len()
        )));
    }
    let m = u.manifold.clone();
    let means: Vec<Vec<f64>> = (0..op.rows())
        .into_par_iter()
        .map(|i| row_mean(&m, op, i, u, None))
        .collect::<Result<_>>()?;
    let mut data = Vec::with_capacity(op.rows() * m.ambient_dim());
    for c in means {
        data.extend_from_slice(&c);
    }
    let shape =
        if op.rows() == u.len() { u.shape } else { SignalShape::One(op.rows()) };
    Signal::from_coords(m, shape, data)
}

/// One measurement residual (1/q) d(mean(a_i., u), f_i)^q as an atom over
/// the row's footprint. Carries both a gradient (chain rule through the
/// implicit mean) and a proximal map (inner descent), so it slots into the
/// forward-backward drivers as well as plain proximal splitting.
pub struct MeanDataAtom {
    op: Arc<ForwardOperator>,
    row: usize,
    target: Vec<f64>,
    manifold: Manifold,
    q: f64,
}

/// One atom per measurement row, all sharing the operator.
pub fn mean_data_atoms(
    op: &ForwardOperator,
    f: &Signal,
    q: f64,
) -> Result<Vec<Box<dyn Atom>>> {
    if f.len() != op.rows() {
        return Err(MvrError::InvalidArgument(format!(
            "operator produces {} measurements, data has {}",
            op.rows(),
            f.len()
        )));
    }
    if q != 1.0 && q != 2.0 {
        return Err(MvrError::InvalidArgument(format!("data exponent q={q} not in {{1, 2}}")));
    }
    let shared = Arc::new(op.clone());
    Ok((0..op.rows())
        .map(|i| {
            Box::new(MeanDataAtom {
                op: shared.clone(),
                row: i,
                target: f.point(i).to_vec(),
                manifold: f.manifold.clone(),
                q,
            }) as Box<dyn Atom>
        })
        .collect())
}

/// Pulls a cotangent sitting at a weighted Karcher mean back to the sample
/// points by differentiating the stationarity condition
/// sum_j w_j log_c(u_j) = 0: with M = sum_j w_j D_c log_c(u_j) in an
/// orthonormal tangent basis at c, solve M^T y = cot and push y through the
/// adjoint argument differentials of the logs. Reports the linearization as
/// singular (for a caller-side fallback) when its condition number passes
/// IMPLICIT_COND_LIMIT.
pub(crate) fn mean_pullback(
    m: &Manifold,
    points: &[&[f64]],
    weights: &[f64],
    center: &[f64],
    cot: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let dim = m.intrinsic_dim();
    let basis = m.tangent_basis(center);
    let mut mat: DMatrix<f64> = DMatrix::zeros(dim, dim);
    for (s, es) in basis.iter().enumerate() {
        let mut acc = vec![0.0; center.len()];
        for (&p, &w) in points.iter().zip(weights) {
            let a = adjoint_diff_of_map(m, GeodesicMap::LogBase, center, p, es)?;
            for (t, c) in acc.iter_mut().zip(a) {
                *t += w * c;
            }
        }
        for (t, et) in basis.iter().enumerate() {
            mat[(s, t)] = m.inner(center, &acc, et);
        }
    }
    let svd = mat.clone().svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !cond.is_finite() || cond > IMPLICIT_COND_LIMIT {
        return Err(MvrError::SingularSystem { context: "mean map tangent system".into(), cond });
    }
    let mut rhs = DVector::zeros(dim);
    for (s, es) in basis.iter().enumerate() {
        rhs[s] = m.inner(center, cot, es);
    }
    let y = mat.transpose().lu().solve(&rhs).ok_or(MvrError::SingularSystem {
        context: "mean map tangent system".into(),
        cond,
    })?;
    let mut y_amb = vec![0.0; center.len()];
    for (s, es) in basis.iter().enumerate() {
        for (t, c) in y_amb.iter_mut().zip(es) {
            *t += y[s] * c;
        }
    }
    let mut out = Vec::with_capacity(points.len());
    for (&p, &w) in points.iter().zip(weights) {
        let a = adjoint_diff_of_map(m, GeodesicMap::LogArg, center, p, &y_amb)?;
        out.push(a.iter().map(|c| -w * c).collect());
    }
    Ok(out)
}

impl MeanDataAtom {
    fn mean(&self, u: &Signal, warm: Option<&[f64]>) -> Result<Vec<f64>> {
        row_mean(&self.manifold, &self.op, self.row, u, warm)
    }

    fn value_at(&self, u: &Signal) -> Result<f64> {
        let c = self.mean(u, None)?;
        Ok(self.manifold.dist(&c, &self.target).powf(self.q) / self.q)
    }

    /// Chain rule through the optimality condition of the mean.
    fn implicit_gradient(
        &self,
        u: &Signal,
        center: &[f64],
        grad_m: &[f64],
    ) -> Result<Vec<(usize, Vec<f64>)>> {
        let sup = self.op.support(self.row);
        let pts: Vec<&[f64]> = sup.iter().map(|&j| u.point(j)).collect();
        let ws: Vec<f64> = sup.iter().map(|&j| self.op.entry(self.row, j)).collect();
        let pulls = mean_pullback(&self.manifold, &pts, &ws, center, grad_m)?;
        Ok(sup.iter().copied().zip(pulls).collect())
    }

    /// Finite-difference fallback: perturb each footprint sample along an
    /// orthonormal tangent basis and recompute the mean warm-started from
    /// the unperturbed one.
    fn fd_gradient(&self, u: &Signal, center: &[f64]) -> Result<Vec<(usize, Vec<f64>)>> {
        let m = self.manifold.clone();
        let sup = self.op.support(self.row).to_vec();
        let ws: Vec<f64> = sup.iter().map(|&j| self.op.entry(self.row, j)).collect();
        let mut out = Vec::with_capacity(sup.len());
        for &j in &sup {
            let phi = |p: &[f64]| -> Result<f64> {
                let pts: Vec<&[f64]> =
                    sup.iter().map(|&t| if t == j { p } else { u.point(t) }).collect();
                let (c, _) = karcher_mean_coords_from(&m, Some(center), &pts, &ws, &mean_schedule())
                    .map_err(relabel_row(self.row))?;
                Ok(m.dist(&c, &self.target).powf(self.q) / self.q)
            };
            out.push((j, grad_scalar_fd(&m, &phi, u.point(j), 1e-6)?));
        }
        Ok(out)
    }
}

impl Atom for MeanDataAtom {
    fn role(&self) -> AtomRole {
        AtomRole::Data
    }

    fn kind(&self) -> AtomKind {
        AtomKind::Both
    }

    fn footprint(&self) -> Vec<usize> {
        self.op.support(self.row).to_vec()
    }

    fn evaluate(&self, u: &Signal) -> f64 {
        // a diverging mean makes the configuration worthless to any line
        // search; errors surface through grad/prox instead
        self.value_at(u).unwrap_or(f64::INFINITY)
    }

    fn grad(&self, u: &Signal) -> Result<Vec<(usize, Vec<f64>)>> {
        let m = &self.manifold;
        let sup = self.op.support(self.row);
        let center = self.mean(u, None)?;
        let d = m.dist(&center, &self.target);
        if d < 1e-14 {
            // q=2: smooth zero; q=1: zero is a valid subgradient element
            return Ok(Vec::new());
        }
        let lg = m.log(&center, &self.target);
        if lg.non_unique {
            return Err(MvrError::CutLocus(format!(
                "measurement row {} mean sits at the cut locus of its target",
                self.row
            )));
        }
        let grad_m: Vec<f64> =
            lg.value.iter().map(|c| -c * d.powf(self.q - 2.0)).collect();
        if sup.len() == 1 && (self.op.entry(self.row, sup[0]) - 1.0).abs() < 1e-15 {
            // direct measurement: the mean map is the identity
            return Ok(vec![(sup[0], grad_m)]);
        }
        match self.implicit_gradient(u, &center, &grad_m) {
            Err(MvrError::SingularSystem { .. }) => self.fd_gradient(u, &center),
            other => other,
        }
    }

    fn prox(&self, u: &mut Signal, lambda: f64) -> Result<()> {
        if !(lambda >= 0.0) {
            return Err(MvrError::InvalidArgument("negative prox step".into()));
        }
        if lambda == 0.0 {
            return Ok(());
        }
        let m = self.manifold.clone();
        let amb = m.ambient_dim();
        let sup = self.op.support(self.row).to_vec();
        if sup.len() == 1 && (self.op.entry(self.row, sup[0]) - 1.0).abs() < 1e-15 {
            // direct measurement: exact proximal point of (1/q) d^q
            let params = ProxParams { lambda, alpha: 1.0, q: self.q, variant: ProxVariant::Power };
            let p = prox_data(&m, u.point(sup[0]), &self.target, &params)?;
            u.data_mut()[sup[0] * amb..(sup[0] + 1) * amb].copy_from_slice(&p);
            return Ok(());
        }
        // inner subgradient descent on the step-normalized objective
        // d^2(x, u)/2 + lambda D_i(x), best iterate kept
        let base = u.clone();
        let objective = |x: &Signal| -> f64 {
            let mut d2 = 0.0;
            for &j in &sup {
                let d = m.dist(x.point(j), base.point(j));
                d2 += d * d;
            }
            d2 / 2.0 + lambda * self.evaluate(x)
        };
        let mut best = u.clone();
        let mut best_val = objective(u);
        let mut cur = u.clone();
        for it in 1..=40 {
            let mut g = self.grad(&cur)?;
            for (j, cj) in g.iter_mut() {
                let pull = m.log(cur.point(*j), base.point(*j)).value;
                for (c, p) in cj.iter_mut().zip(pull) {
                    *c = lambda * *c - p;
                }
            }
            let gn: f64 = g
                .iter()
                .map(|(j, cj)| m.inner(cur.point(*j), cj, cj))
                .sum::<f64>()
                .sqrt();
            if gn < 1e-13 {
                break;
            }
            let step = 1.0 / it as f64;
            for (j, cj) in &g {
                let v: Vec<f64> = cj.iter().map(|c| -step * c).collect();
                let p = m.exp(cur.point(*j), &v);
                cur.data_mut()[j * amb..(j + 1) * amb].copy_from_slice(&p);
            }
            let val = objective(&cur);
            if val < best_val {
                best_val = val;
                best = cur.clone();
            }
        }
        *u = best;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InverseEngine {
    /// Jacobi gradient step on the summed data atoms, then prox sweeps.
    Fbs,
    /// Gauss-Seidel trajectory sweeps over the data atoms, then prox sweeps.
    FbsTraj,
    /// Pure proximal splitting over data and regularizer atoms alike; the
    /// choice when q = 1 makes the data term non-differentiable.
    Cppa,
}

/// Tikhonov-Phillips style reconstruction: minimizes the summed measurement
/// residuals plus whatever regularizer atoms are supplied (may be empty for
/// a pure consistency solve). Starts from `x0` or, by default, from the
/// measurement most influenced by each sample.
pub fn solve_inverse(
    op: &ForwardOperator,
    f: &Signal,
    q: f64,
    reg_atoms: Vec<Box<dyn Atom>>,
    x0: Option<&Signal>,
    schedule: &SolverSchedule,
    engine: InverseEngine,
) -> Result<SolverOutput> {
    let data = mean_data_atoms(op, f, q)?;
    let start = match x0 {
        Some(s) => {
            if s.len() != op.cols() {
                return Err(MvrError::InvalidArgument(format!(
                    "start has {} samples, operator reconstructs {}",
                    s.len(),
                    op.cols()
                )));
            }
            if s.manifold != f.manifold {
                return Err(MvrError::ManifoldMismatch {
                    left: s.manifold.name(),
                    right: f.manifold.name(),
                });
            }
            s.clone()
        }
        None => default_start(op, f)?,
    };
    match engine {
        InverseEngine::Fbs => fbs(&data, &reg_atoms, &start, schedule),
        InverseEngine::FbsTraj => fbs_traj(&data, &reg_atoms, &start, schedule),
        InverseEngine::Cppa => {
            let all: Vec<Box<dyn Atom>> = data.into_iter().chain(reg_atoms).collect();
            cppa(&all, &start, schedule)
        }
    }
}

/// Seeds u_j with the measurement whose row weights it most heavily; for
/// banded convolutions this is the blurred signal itself.
fn default_start(op: &ForwardOperator, f: &Signal) -> Result<Signal> {
    let mut data = Vec::with_capacity(op.cols() * f.manifold.ambient_dim());
    for j in 0..op.cols() {
        let besti = (0..op.rows())
            .max_by(|a, b| {
                op.entry(*a, j).abs().partial_cmp(&op.entry(*b, j).abs()).expect("finite entries")
            })
            .expect("operator has rows");
        data.extend_from_slice(f.point(besti));
    }
    let shape =
        if op.cols() == f.len() { f.shape } else { SignalShape::One(op.cols()) };
    Signal::from_coords(f.manifold.clone(), shape, data)
}
