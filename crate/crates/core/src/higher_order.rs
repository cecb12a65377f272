//! Second-order constructions: the midpoint defect `D_c`, the cross defect
//! `D_cc`, Schild's ladder, tuple distances, the TV² and S-TGV energies with
//! their subgradients, and proximal denoising drivers for both.
//!
//! Everything here is built from point operations only (geodesic points,
//! midpoints, geodesic extensions); no tangent-space linearization is needed
//! except for the parallel-transport tuple distance.

use rayon::prelude::*;

use crate::atoms::{Atom, AtomKind, AtomRole};
use crate::error::{MvrError, Result};
use crate::manifold::diff::{adjoint_diff_of_map, grad_scalar_fd, GeodesicMap};
use crate::manifold::{Flagged, Manifold, ManifoldPoint};
use crate::prox::{prox_data, prox_pair, ProxParams, ProxVariant};
use crate::signal::{Signal, SignalShape};
use crate::solver::{cppa, subgradient_descent, SolverOutput, SolverSchedule, TraceRow};
use crate::tv::DataAtom;

/// Below this defect size the penalties are treated as sitting at their kink
/// and the zero element of the subdifferential is returned.
const DEGENERATE: f64 = 1e-12;

/// Fixed iteration budget of the inner subgradient solves for the defect
/// proximal subproblems.
const INNER_ITERS: usize = 50;

/// Discrete tangent: the ordered pair [base, tip] standing in for the vector
/// log_base(tip) without ever forming it.
#[derive(Clone, Debug)]
pub struct PointTuple {
    pub base: ManifoldPoint,
    pub tip: ManifoldPoint,
}

impl PointTuple {
    pub fn new(base: ManifoldPoint, tip: ManifoldPoint) -> Result<Self> {
        if base.manifold != tip.manifold {
            return Err(MvrError::ManifoldMismatch {
                left: base.manifold.name(),
                right: tip.manifold.name(),
            });
        }
        Ok(PointTuple { base, tip })
    }

    pub fn manifold(&self) -> &Manifold {
        &self.base.manifold
    }
}

/// How tuples with different base points are compared.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TgvVariant {
    /// Schild's ladder: midpoint + geodesic extension, point operations only.
    Schild,
    /// Exact parallel transport of the identified tangent vectors; undefined
    /// across cut loci and only available for univariate signals.
    ParallelTransport,
}

/// Weights and coupling of the total generalized variation energy.
#[derive(Clone, Copy, Debug)]
pub struct TGVWeights {
    pub alpha1: f64,
    pub alpha0: f64,
    /// Inner coupling exponent of the bivariate form, 1 or 2.
    pub p: f64,
    pub variant: TgvVariant,
}

impl Default for TGVWeights {
    fn default() -> Self {
        TGVWeights { alpha1: 1.0, alpha0: 1.0, p: 1.0, variant: TgvVariant::Schild }
    }
}

impl TGVWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha1 > 0.0) || !(self.alpha0 > 0.0) {
            return Err(MvrError::InvalidArgument(format!(
                "tgv weights must be positive, got alpha1 = {}, alpha0 = {}",
                self.alpha1, self.alpha0
            )));
        }
        if self.p != 1.0 && self.p != 2.0 {
            return Err(MvrError::InvalidArgument(format!(
                "tgv coupling exponent must be 1 or 2, got {}",
                self.p
            )));
        }
        Ok(())
    }
}

fn same_descriptor(m: &Manifold, pts: &[&ManifoldPoint]) -> Result<()> {
    for p in pts {
        if &p.manifold != m {
            return Err(MvrError::ManifoldMismatch {
                left: m.name(),
                right: p.manifold.name(),
            });
        }
    }
    Ok(())
}

fn checked_log(m: &Manifold, x: &[f64], y: &[f64], what: &str) -> Result<Vec<f64>> {
    let l = m.log(x, y);
    if l.non_unique {
        return Err(MvrError::CutLocus(format!("{what} crosses a cut locus")));
    }
    Ok(l.value)
}

fn scaled(v: &[f64], s: f64) -> Vec<f64> {
    v.iter().map(|c| c * s).collect()
}

// ---------------------------------------------------------------------------
// defect distances
// ---------------------------------------------------------------------------

/// Midpoint defect 2·d([u₋,u₊]_½, u∘). For endpoints on each other's cut
/// locus both deterministic midpoint branches are tried and the smaller
/// defect is kept.
pub fn d_c_coords(m: &Manifold, u_minus: &[f64], u_center: &[f64], u_plus: &[f64]) -> f64 {
    let mid = m.geopoint(u_minus, u_plus, 0.5);
    let d = 2.0 * m.dist(&mid.value, u_center);
    if mid.non_unique {
        let alt = m.geopoint(u_plus, u_minus, 0.5).value;
        d.min(2.0 * m.dist(&alt, u_center))
    } else {
        d
    }
}

pub fn d_c(u_minus: &ManifoldPoint, u_center: &ManifoldPoint, u_plus: &ManifoldPoint) -> Result<f64> {
    let m = &u_center.manifold;
    same_descriptor(m, &[u_minus, u_plus])?;
    Ok(d_c_coords(m, &u_minus.coords, &u_center.coords, &u_plus.coords))
}

/// Cross defect: twice the distance between the midpoints of the two
/// diagonals of the index square {(i,j), (i+1,j), (i,j−1), (i+1,j−1)}.
pub fn d_cc_coords(m: &Manifold, u00: &[f64], u10: &[f64], u0m: &[f64], u1m: &[f64]) -> f64 {
    let c1 = m.geopoint(u10, u0m, 0.5).value;
    let c2 = m.geopoint(u00, u1m, 0.5).value;
    2.0 * m.dist(&c1, &c2)
}

pub fn d_cc(
    u00: &ManifoldPoint,
    u10: &ManifoldPoint,
    u0m: &ManifoldPoint,
    u1m: &ManifoldPoint,
) -> Result<f64> {
    let m = &u00.manifold;
    same_descriptor(m, &[u10, u0m, u1m])?;
    Ok(d_cc_coords(m, &u00.coords, &u10.coords, &u0m.coords, &u1m.coords))
}

/// One rung of Schild's ladder: [u_prev, [u_cur, y_prev]_½]₂, the geodesic
/// extension through the cross midpoint. Carries the tuple [u_prev, y_prev]
/// to the base u_cur; exact transport in flat space (y_prev + u_cur − u_prev).
pub fn schild_coords(
    m: &Manifold,
    u_prev: &[f64],
    y_prev: &[f64],
    u_cur: &[f64],
) -> Flagged<Vec<f64>> {
    let c = m.geopoint(u_cur, y_prev, 0.5);
    let out = m.geopoint(u_prev, &c.value, 2.0);
    Flagged { value: out.value, non_unique: c.non_unique || out.non_unique }
}

pub fn schild_point(
    u_prev: &ManifoldPoint,
    y_prev: &ManifoldPoint,
    u_cur: &ManifoldPoint,
) -> Result<Flagged<ManifoldPoint>> {
    let m = &u_prev.manifold;
    same_descriptor(m, &[y_prev, u_cur])?;
    let out = schild_coords(m, &u_prev.coords, &y_prev.coords, &u_cur.coords);
    Ok(Flagged {
        value: ManifoldPoint::new_unchecked(m.clone(), out.value),
        non_unique: out.non_unique,
    })
}

/// Schild tuple distance D_S([x,y],[u,v]) = d(y, S(u,v,x)): the tip defect
/// after carrying the second tuple to the first base. With equal bases this
/// collapses to d(v,y).
pub fn d_s_coords(m: &Manifold, t1_base: &[f64], t1_tip: &[f64], t2_base: &[f64], t2_tip: &[f64]) -> f64 {
    let carried = schild_coords(m, t2_base, t2_tip, t1_base).value;
    m.dist(t1_tip, &carried)
}

pub fn d_s(t1: &PointTuple, t2: &PointTuple) -> Result<f64> {
    let m = t1.manifold();
    same_descriptor(m, &[&t1.tip, &t2.base, &t2.tip])?;
    Ok(d_s_coords(m, &t1.base.coords, &t1.tip.coords, &t2.base.coords, &t2.tip.coords))
}

/// Parallel-transport tuple distance ‖log_x(y) − pt_x(log_u(v))‖_x.
pub fn d_pt_coords(
    m: &Manifold,
    t1_base: &[f64],
    t1_tip: &[f64],
    t2_base: &[f64],
    t2_tip: &[f64],
) -> Result<f64> {
    let own = checked_log(m, t1_base, t1_tip, "tuple log")?;
    let other = checked_log(m, t2_base, t2_tip, "tuple log")?;
    let carried = m.transport(t2_base, t1_base, &other)?;
    let diff: Vec<f64> = own.iter().zip(&carried).map(|(a, b)| a - b).collect();
    Ok(m.norm(t1_base, &diff))
}

pub fn d_pt(t1: &PointTuple, t2: &PointTuple) -> Result<f64> {
    let m = t1.manifold();
    same_descriptor(m, &[&t1.tip, &t2.base, &t2.tip])?;
    d_pt_coords(m, &t1.base.coords, &t1.tip.coords, &t2.base.coords, &t2.tip.coords)
}

/// Symmetrized cross defect for the off-diagonal part of the discrete
/// symmetrized Jacobian. The two predecessor tuples are carried over by
/// Schild's ladder (the first-direction tuple to the second base and vice
/// versa), then the current tips and the carried tips are averaged pairwise
/// and the defect is the distance between the two averages. In flat space
/// this is |½(δ w¹ + δ w²)|: half the magnitude of the symmetrized mixed
/// difference, independent of the base points.
pub fn d_s_sym_coords(
    m: &Manifold,
    tx: (&[f64], &[f64]),
    ty: (&[f64], &[f64]),
    prev_x: (&[f64], &[f64]),
    prev_y: (&[f64], &[f64]),
) -> f64 {
    let carried_x = schild_coords(m, prev_x.0, prev_x.1, ty.0).value;
    let carried_y = schild_coords(m, prev_y.0, prev_y.1, tx.0).value;
    let c_cur = m.geopoint(tx.1, ty.1, 0.5).value;
    let c_prev = m.geopoint(&carried_x, &carried_y, 0.5).value;
    m.dist(&c_cur, &c_prev)
}

pub fn d_s_sym(
    tx: &PointTuple,
    ty: &PointTuple,
    tx_prev: &PointTuple,
    ty_prev: &PointTuple,
) -> Result<f64> {
    let m = tx.manifold();
    same_descriptor(
        m,
        &[&tx.tip, &ty.base, &ty.tip, &tx_prev.base, &tx_prev.tip, &ty_prev.base, &ty_prev.tip],
    )?;
    Ok(d_s_sym_coords(
        m,
        (&tx.base.coords, &tx.tip.coords),
        (&ty.base.coords, &ty.tip.coords),
        (&tx_prev.base.coords, &tx_prev.tip.coords),
        (&ty_prev.base.coords, &ty_prev.tip.coords),
    ))
}

// ---------------------------------------------------------------------------
// energies
// ---------------------------------------------------------------------------

fn validate_p(p: f64) -> Result<()> {
    if !(p >= 1.0) {
        return Err(MvrError::InvalidArgument(format!(
            "coupling exponent must satisfy p >= 1, got {p}"
        )));
    }
    Ok(())
}

/// Second-order total variation. Univariate: Σ_i D_c over interior samples.
/// Bivariate: Σ_{i,j} (D_c,row^p + D_c,col^p + 2 D_cc^p)^{1/p} with
/// out-of-bound summands dropped.
pub fn tv2_energy(u: &Signal, p: f64) -> Result<f64> {
    validate_p(p)?;
    let m = &u.manifold;
    match u.shape {
        SignalShape::One(n) => {
            let mut total = 0.0;
            for i in 1..n.saturating_sub(1) {
                total += d_c_coords(m, u.point(i - 1), u.point(i), u.point(i + 1));
            }
            Ok(total)
        }
        SignalShape::Two(rows, cols) => {
            let idx = |i: usize, j: usize| i * cols + j;
            let mut total = 0.0;
            for i in 0..rows {
                for j in 0..cols {
                    let a = if i >= 1 && i + 1 < rows {
                        d_c_coords(m, u.point(idx(i - 1, j)), u.point(idx(i, j)), u.point(idx(i + 1, j)))
                    } else {
                        0.0
                    };
                    let b = if j >= 1 && j + 1 < cols {
                        d_c_coords(m, u.point(idx(i, j - 1)), u.point(idx(i, j)), u.point(idx(i, j + 1)))
                    } else {
                        0.0
                    };
                    let c = if i + 1 < rows && j >= 1 {
                        d_cc_coords(
                            m,
                            u.point(idx(i, j)),
                            u.point(idx(i + 1, j)),
                            u.point(idx(i, j - 1)),
                            u.point(idx(i + 1, j - 1)),
                        )
                    } else {
                        0.0
                    };
                    if a > 0.0 || b > 0.0 || c > 0.0 {
                        total += (a.powf(p) + b.powf(p) + 2.0 * c.powf(p)).powf(1.0 / p);
                    }
                }
            }
            Ok(total)
        }
    }
}

fn check_same_layout(a: &Signal, b: &Signal) -> Result<()> {
    if a.manifold != b.manifold {
        return Err(MvrError::ManifoldMismatch { left: a.manifold.name(), right: b.manifold.name() });
    }
    if a.shape != b.shape {
        return Err(MvrError::InvalidArgument(format!(
            "signal shapes differ: {:?} vs {:?}",
            a.shape, b.shape
        )));
    }
    Ok(())
}

fn tuple_distance(
    m: &Manifold,
    variant: TgvVariant,
    t1: (&[f64], &[f64]),
    t2: (&[f64], &[f64]),
) -> Result<f64> {
    match variant {
        TgvVariant::Schild => Ok(d_s_coords(m, t1.0, t1.1, t2.0, t2.1)),
        TgvVariant::ParallelTransport => d_pt_coords(m, t1.0, t1.1, t2.0, t2.1),
    }
}

/// Univariate S-TGV at a fixed tip field:
/// Σ_i α₁ d(u_{i+1}, y_i) + α₀ D([u_i,y_i],[u_{i−1},y_{i−1}]).
/// The TGV value itself is the minimum over y, approximated by
/// [`denoise_stgv`]; this is the exact evaluation for given y.
pub fn stgv_energy_1d(u: &Signal, y: &Signal, w: &TGVWeights) -> Result<f64> {
    w.validate()?;
    check_same_layout(u, y)?;
    let n = match u.shape {
        SignalShape::One(n) => n,
        SignalShape::Two(..) => {
            return Err(MvrError::InvalidArgument(
                "stgv_energy_1d expects univariate signals".into(),
            ))
        }
    };
    let m = &u.manifold;
    let mut total = 0.0;
    for i in 0..n.saturating_sub(1) {
        total += w.alpha1 * m.dist(u.point(i + 1), y.point(i));
    }
    for i in 1..n {
        total += w.alpha0
            * tuple_distance(
                m,
                w.variant,
                (u.point(i), y.point(i)),
                (u.point(i - 1), y.point(i - 1)),
            )?;
    }
    Ok(total)
}

/// Bivariate S-TGV at fixed tip fields y¹ (row direction) and y² (column
/// direction), with ℓᵖ inner coupling and out-of-bound summands dropped.
/// Only the Schild variant has a bivariate symmetrized term.
pub fn stgv_energy_2d(u: &Signal, y1: &Signal, y2: &Signal, w: &TGVWeights) -> Result<f64> {
    w.validate()?;
    check_same_layout(u, y1)?;
    check_same_layout(u, y2)?;
    if w.variant != TgvVariant::Schild {
        return Err(MvrError::InvalidArgument(
            "bivariate tgv is only defined for the Schild variant".into(),
        ));
    }
    let (rows, cols) = match u.shape {
        SignalShape::Two(r, c) => (r, c),
        SignalShape::One(_) => {
            return Err(MvrError::InvalidArgument(
                "stgv_energy_2d expects images".into(),
            ))
        }
    };
    let m = &u.manifold;
    let p = w.p;
    let idx = |i: usize, j: usize| i * cols + j;
    let mut total = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let a = if i + 1 < rows { m.dist(u.point(idx(i + 1, j)), y1.point(idx(i, j))) } else { 0.0 };
            let b = if j + 1 < cols { m.dist(u.point(idx(i, j + 1)), y2.point(idx(i, j))) } else { 0.0 };
            if a > 0.0 || b > 0.0 {
                total += w.alpha1 * (a.powf(p) + b.powf(p)).powf(1.0 / p);
            }

            let dv = if i >= 1 {
                d_s_coords(m, u.point(idx(i, j)), y1.point(idx(i, j)), u.point(idx(i - 1, j)), y1.point(idx(i - 1, j)))
            } else {
                0.0
            };
            let dh = if j >= 1 {
                d_s_coords(m, u.point(idx(i, j)), y2.point(idx(i, j)), u.point(idx(i, j - 1)), y2.point(idx(i, j - 1)))
            } else {
                0.0
            };
            let dsym = if i >= 1 && j >= 1 {
                d_s_sym_coords(
                    m,
                    (u.point(idx(i, j)), y1.point(idx(i, j))),
                    (u.point(idx(i, j)), y2.point(idx(i, j))),
                    (u.point(idx(i, j - 1)), y1.point(idx(i, j - 1))),
                    (u.point(idx(i - 1, j)), y2.point(idx(i - 1, j))),
                )
            } else {
                0.0
            };
            if dv > 0.0 || dh > 0.0 || dsym > 0.0 {
                total += w.alpha0 * (dv.powf(p) + dh.powf(p) + 2.0 * dsym.powf(p)).powf(1.0 / p);
            }
        }
    }
    Ok(total)
}

/// Definitional infimal-convolution energy ½(α₁ TV(v) + α₀ TV²(w)) together
/// with the midpoint-constraint residual max_i d(u_i, [v_i,w_i]_½). Only the
/// evaluator is provided; no IC minimizer is shipped.
pub fn ic_energy(
    u: &Signal,
    v: &Signal,
    w: &Signal,
    alpha1: f64,
    alpha0: f64,
) -> Result<(f64, f64)> {
    check_same_layout(u, v)?;
    check_same_layout(u, w)?;
    let m = &u.manifold;
    let (rows, cols) = u.dims();
    let idx = |i: usize, j: usize| i * cols + j;
    let mut tv = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            if i + 1 < rows {
                tv += m.dist(v.point(idx(i, j)), v.point(idx(i + 1, j)));
            }
            if j + 1 < cols {
                tv += m.dist(v.point(idx(i, j)), v.point(idx(i, j + 1)));
            }
        }
    }
    let tv2 = tv2_energy(w, 1.0)?;
    let mut residual = 0.0_f64;
    for i in 0..u.len() {
        let mid = m.geopoint(v.point(i), w.point(i), 0.5).value;
        residual = residual.max(m.dist(u.point(i), &mid));
    }
    Ok((0.5 * (alpha1 * tv + alpha0 * tv2), residual))
}

// ---------------------------------------------------------------------------
// subgradients
// ---------------------------------------------------------------------------

/// Subgradient components of the midpoint defect, one tangent vector per
/// argument, in ambient coordinates.
#[derive(Clone, Debug)]
pub struct DcGrad {
    pub left: Vec<f64>,
    pub center: Vec<f64>,
    pub right: Vec<f64>,
}

/// Riemannian ascent subgradient of D_c(x, y, z) = 2·d([x,z]_½, y). The
/// center component is −2·log_y(c)/d; the outer components pull the unit
/// vector at the midpoint back through the adjoint differentials of the
/// midpoint map. Degenerate configurations (y at the midpoint) return the
/// zero element of the subdifferential.
pub fn dc_gradient(m: &Manifold, x: &[f64], y: &[f64], z: &[f64]) -> Result<DcGrad> {
    let mid = m.geopoint(x, z, 0.5);
    if mid.non_unique {
        return Err(MvrError::CutLocus(
            "midpoint-defect gradient with endpoints on each other's cut locus".into(),
        ));
    }
    let c = mid.value;
    let d = m.dist(&c, y);
    let dim = m.ambient_dim();
    if d < DEGENERATE {
        return Ok(DcGrad { left: vec![0.0; dim], center: vec![0.0; dim], right: vec![0.0; dim] });
    }
    let center = scaled(&checked_log(m, y, &c, "midpoint-defect gradient")?, -2.0 / d);
    let at_mid = scaled(&checked_log(m, &c, y, "midpoint-defect gradient")?, -2.0 / d);
    let left = adjoint_diff_of_map(m, GeodesicMap::GeoFirst(0.5), x, z, &at_mid)?;
    let right = adjoint_diff_of_map(m, GeodesicMap::GeoSecond(0.5), x, z, &at_mid)?;
    Ok(DcGrad { left, center, right })
}

/// The printed subgradient element of the midpoint defect: the unit vector
/// log_y(c)/‖·‖ in the center slot and its adjoint-transported counterparts
/// in the outer slots. This is the descent direction of half the defect,
/// i.e. −½ times [`dc_gradient`]; the normalization makes the center
/// component unit length.
pub fn grad_dc(m: &Manifold, x: &[f64], y: &[f64], z: &[f64]) -> Result<DcGrad> {
    let g = dc_gradient(m, x, y, z)?;
    Ok(DcGrad {
        left: scaled(&g.left, -0.5),
        center: scaled(&g.center, -0.5),
        right: scaled(&g.right, -0.5),
    })
}

/// Ascent subgradient components of the cross defect D_cc, one per corner.
#[derive(Clone, Debug)]
pub struct DccGrad {
    pub u00: Vec<f64>,
    pub u10: Vec<f64>,
    pub u0m: Vec<f64>,
    pub u1m: Vec<f64>,
}

pub fn dcc_gradient(
    m: &Manifold,
    u00: &[f64],
    u10: &[f64],
    u0m: &[f64],
    u1m: &[f64],
) -> Result<DccGrad> {
    let c1 = m.geopoint(u10, u0m, 0.5);
    let c2 = m.geopoint(u00, u1m, 0.5);
    if c1.non_unique || c2.non_unique {
        return Err(MvrError::CutLocus("cross-defect gradient across a cut locus".into()));
    }
    let d = m.dist(&c1.value, &c2.value);
    let dim = m.ambient_dim();
    if d < DEGENERATE {
        let z = vec![0.0; dim];
        return Ok(DccGrad { u00: z.clone(), u10: z.clone(), u0m: z.clone(), u1m: z });
    }
    let g1 = scaled(&checked_log(m, &c1.value, &c2.value, "cross-defect gradient")?, -2.0 / d);
    let g2 = scaled(&checked_log(m, &c2.value, &c1.value, "cross-defect gradient")?, -2.0 / d);
    Ok(DccGrad {
        u10: adjoint_diff_of_map(m, GeodesicMap::GeoFirst(0.5), u10, u0m, &g1)?,
        u0m: adjoint_diff_of_map(m, GeodesicMap::GeoSecond(0.5), u10, u0m, &g1)?,
        u00: adjoint_diff_of_map(m, GeodesicMap::GeoFirst(0.5), u00, u1m, &g2)?,
        u1m: adjoint_diff_of_map(m, GeodesicMap::GeoSecond(0.5), u00, u1m, &g2)?,
    })
}

/// Ascent subgradient of the Schild tuple distance, one component per tuple
/// slot. The first-tip component −log_y(S)/‖·‖ is unit length; the others
/// run through the adjoint differentials of the ladder.
#[derive(Clone, Debug)]
pub struct DsGrad {
    pub base1: Vec<f64>,
    pub tip1: Vec<f64>,
    pub base2: Vec<f64>,
    pub tip2: Vec<f64>,
}

pub fn grad_ds(
    m: &Manifold,
    t1: (&[f64], &[f64]),
    t2: (&[f64], &[f64]),
) -> Result<DsGrad> {
    let (xb, xt) = t1;
    let (ub, ut) = t2;
    let c = m.geopoint(xb, ut, 0.5);
    let s = m.geopoint(ub, &c.value, 2.0);
    if c.non_unique || s.non_unique {
        return Err(MvrError::CutLocus("ladder gradient across a cut locus".into()));
    }
    let d = m.dist(xt, &s.value);
    let dim = m.ambient_dim();
    if d < DEGENERATE {
        let z = vec![0.0; dim];
        return Ok(DsGrad { base1: z.clone(), tip1: z.clone(), base2: z.clone(), tip2: z });
    }
    let tip1 = scaled(&checked_log(m, xt, &s.value, "ladder gradient")?, -1.0 / d);
    let at_s = scaled(&checked_log(m, &s.value, xt, "ladder gradient")?, -1.0 / d);
    let base2 = adjoint_diff_of_map(m, GeodesicMap::GeoFirst(2.0), ub, &c.value, &at_s)?;
    let at_c = adjoint_diff_of_map(m, GeodesicMap::GeoSecond(2.0), ub, &c.value, &at_s)?;
    let base1 = adjoint_diff_of_map(m, GeodesicMap::GeoFirst(0.5), xb, ut, &at_c)?;
    let tip2 = adjoint_diff_of_map(m, GeodesicMap::GeoSecond(0.5), xb, ut, &at_c)?;
    Ok(DsGrad { base1, tip1, base2, tip2 })
}

/// Ascent subgradient of the symmetrized cross defect, one component per
/// slot of the four tuples.
#[derive(Clone, Debug)]
pub struct DsSymGrad {
    pub tx_base: Vec<f64>,
    pub tx_tip: Vec<f64>,
    pub ty_base: Vec<f64>,
    pub ty_tip: Vec<f64>,
    pub prev_x_base: Vec<f64>,
    pub prev_x_tip: Vec<f64>,
    pub prev_y_base: Vec<f64>,
    pub prev_y_tip: Vec<f64>,
}

pub fn grad_ds_sym(
    m: &Manifold,
    tx: (&[f64], &[f64]),
    ty: (&[f64], &[f64]),
    prev_x: (&[f64], &[f64]),
    prev_y: (&[f64], &[f64]),
) -> Result<DsSymGrad> {
    // forward pass, mirroring d_s_sym_coords
    let c1 = m.geopoint(ty.0, prev_x.1, 0.5);
    let carried_x = m.geopoint(prev_x.0, &c1.value, 2.0);
    let c2 = m.geopoint(tx.0, prev_y.1, 0.5);
    let carried_y = m.geopoint(prev_y.0, &c2.value, 2.0);
    let c_cur = m.geopoint(tx.1, ty.1, 0.5);
    let c_prev = m.geopoint(&carried_x.value, &carried_y.value, 0.5);
    if c1.non_unique
        || carried_x.non_unique
        || c2.non_unique
        || carried_y.non_unique
        || c_cur.non_unique
        || c_prev.non_unique
    {
        return Err(MvrError::CutLocus("symmetrized-defect gradient across a cut locus".into()));
    }
    let d = m.dist(&c_cur.value, &c_prev.value);
    let dim = m.ambient_dim();
    if d < DEGENERATE {
        let z = vec![0.0; dim];
        return Ok(DsSymGrad {
            tx_base: z.clone(),
            tx_tip: z.clone(),
            ty_base: z.clone(),
            ty_tip: z.clone(),
            prev_x_base: z.clone(),
            prev_x_tip: z.clone(),
            prev_y_base: z.clone(),
            prev_y_tip: z,
        });
    }
    let g_cur = scaled(&checked_log(m, &c_cur.value, &c_prev.value, "symmetrized defect")?, -1.0 / d);
    let g_prev = scaled(&checked_log(m, &c_prev.value, &c_cur.value, "symmetrized defect")?, -1.0 / d);

    let tx_tip = adjoint_diff_of_map(m, GeodesicMap::GeoFirst(0.5), tx.1, ty.1, &g_cur)?;
    let ty_tip = adjoint_diff_of_map(m, GeodesicMap::GeoSecond(0.5), tx.1, ty.1, &g_cur)?;

    let w1 = adjoint_diff_of_map(m, GeodesicMap::GeoFirst(0.5), &carried_x.value, &carried_y.value, &g_prev)?;
    let w2 = adjoint_diff_of_map(m, GeodesicMap::GeoSecond(0.5), &carried_x.value, &carried_y.value, &g_prev)?;

    let prev_x_base = adjoint_diff_of_map(m, GeodesicMap::GeoFirst(2.0), prev_x.0, &c1.value, &w1)?;
    let w1c = adjoint_diff_of_map(m, GeodesicMap::GeoSecond(2.0), prev_x.0, &c1.value, &w1)?;
    let ty_base = adjoint_diff_of_map(m, GeodesicMap::GeoFirst(0.5), ty.0, prev_x.1, &w1c)?;
    let prev_x_tip = adjoint_diff_of_map(m, GeodesicMap::GeoSecond(0.5), ty.0, prev_x.1, &w1c)?;

    let prev_y_base = adjoint_diff_of_map(m, GeodesicMap::GeoFirst(2.0), prev_y.0, &c2.value, &w2)?;
    let w2c = adjoint_diff_of_map(m, GeodesicMap::GeoSecond(2.0), prev_y.0, &c2.value, &w2)?;
    let tx_base = adjoint_diff_of_map(m, GeodesicMap::GeoFirst(0.5), tx.0, prev_y.1, &w2c)?;
    let prev_y_tip = adjoint_diff_of_map(m, GeodesicMap::GeoSecond(0.5), tx.0, prev_y.1, &w2c)?;

    Ok(DsSymGrad {
        tx_base,
        tx_tip,
        ty_base,
        ty_tip,
        prev_x_base,
        prev_x_tip,
        prev_y_base,
        prev_y_tip,
    })
}

// ---------------------------------------------------------------------------
// inner proximal subproblems
// ---------------------------------------------------------------------------

/// Approximate prox of λ·term at the anchor points h: minimizes
/// (1/2λ) Σ_l d²(x_l, h_l) + term(x) by subgradient descent with a fixed
/// iteration budget, warm-started at h, steps λ/j, returning the
/// best-objective iterate. The λ-normalized form keeps the first step at
/// the scale of the prox displacement for every λ. `term_grad` supplies
/// ascent subgradients per point in the same order as h.
pub(crate) fn prox_by_descent(
    m: &Manifold,
    h: &[&[f64]],
    lambda: f64,
    term: &(dyn Fn(&[Vec<f64>]) -> Result<f64> + Sync),
    term_grad: &(dyn Fn(&[Vec<f64>]) -> Result<Vec<Vec<f64>>> + Sync),
) -> Result<Vec<Vec<f64>>> {
    let mut x: Vec<Vec<f64>> = h.iter().map(|p| p.to_vec()).collect();
    let objective = |x: &[Vec<f64>]| -> Result<f64> {
        let fit: f64 = x
            .iter()
            .zip(h)
            .map(|(a, b)| {
                let d = m.dist(a, b);
                d * d / (2.0 * lambda)
            })
            .sum();
        Ok(fit + term(x)?)
    };
    let mut best = x.clone();
    let mut best_val = objective(&x)?;
    for j in 1..=INNER_ITERS {
        let mut g = term_grad(&x)?;
        let mut flat = 0.0_f64;
        for (l, gl) in g.iter_mut().enumerate() {
            let pull = m.log(&x[l], h[l]).value;
            for (gc, pc) in gl.iter_mut().zip(&pull) {
                *gc -= pc / lambda;
            }
            flat = flat.max(m.norm(&x[l], gl));
        }
        if flat < 1e-14 {
            break;
        }
        let step = lambda / j as f64;
        for (xl, gl) in x.iter_mut().zip(&g) {
            let v = scaled(gl, -step);
            *xl = m.exp(xl, &v);
        }
        let val = objective(&x)?;
        if val < best_val {
            best_val = val;
            best = x.clone();
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// proximal atoms
// ---------------------------------------------------------------------------

/// One phase of the midpoint-defect splitting: a set of index triples with
/// disjoint footprints, each carrying the penalty α·D_c.
pub struct DcPhaseAtom {
    alpha: f64,
    triples: Vec<[usize; 3]>,
}

impl DcPhaseAtom {
    pub fn new(alpha: f64, triples: Vec<[usize; 3]>) -> Self {
        DcPhaseAtom { alpha, triples }
    }
}

impl Atom for DcPhaseAtom {
    fn role(&self) -> AtomRole {
        AtomRole::Regularizer
    }
    fn kind(&self) -> AtomKind {
        AtomKind::Both
    }
    fn footprint(&self) -> Vec<usize> {
        self.triples.iter().flatten().copied().collect()
    }
    fn evaluate(&self, u: &Signal) -> f64 {
        let m = &u.manifold;
        self.alpha
            * self
                .triples
                .iter()
                .map(|t| d_c_coords(m, u.point(t[0]), u.point(t[1]), u.point(t[2])))
                .sum::<f64>()
    }
    fn prox(&self, u: &mut Signal, lambda: f64) -> Result<()> {
        let lam = lambda * self.alpha;
        if lam == 0.0 {
            return Ok(());
        }
        let m = u.manifold.clone();
        let moved: Vec<Vec<Vec<f64>>> = self
            .triples
            .par_iter()
            .map(|t| {
                let h = [u.point(t[0]), u.point(t[1]), u.point(t[2])];
                prox_by_descent(
                    &m,
                    &h,
                    lam,
                    &|x| Ok(d_c_coords(&m, &x[0], &x[1], &x[2])),
                    &|x| {
                        let g = dc_gradient(&m, &x[0], &x[1], &x[2])?;
                        Ok(vec![g.left, g.center, g.right])
                    },
                )
            })
            .collect::<Result<_>>()?;
        for (t, out) in self.triples.iter().zip(moved) {
            for (k, &i) in t.iter().enumerate() {
                u.set_point(i, &out[k]);
            }
        }
        Ok(())
    }
    fn grad(&self, u: &Signal) -> Result<Vec<(usize, Vec<f64>)>> {
        let m = &u.manifold;
        let mut out = Vec::new();
        for t in &self.triples {
            let g = dc_gradient(m, u.point(t[0]), u.point(t[1]), u.point(t[2]))?;
            out.push((t[0], scaled(&g.left, self.alpha)));
            out.push((t[1], scaled(&g.center, self.alpha)));
            out.push((t[2], scaled(&g.right, self.alpha)));
        }
        Ok(out)
    }
}

/// One parity class of the cross-defect splitting on images: index quads
/// (anchor, row-neighbor, column-predecessor, diagonal) with weight α per
/// quad, α already including the doubling of the mixed term.
pub struct DccPhaseAtom {
    alpha: f64,
    quads: Vec<[usize; 4]>,
}

impl DccPhaseAtom {
    pub fn new(alpha: f64, quads: Vec<[usize; 4]>) -> Self {
        DccPhaseAtom { alpha, quads }
    }
}

impl Atom for DccPhaseAtom {
    fn role(&self) -> AtomRole {
        AtomRole::Regularizer
    }
    fn kind(&self) -> AtomKind {
        AtomKind::Both
    }
    fn footprint(&self) -> Vec<usize> {
        self.quads.iter().flatten().copied().collect()
    }
    fn evaluate(&self, u: &Signal) -> f64 {
        let m = &u.manifold;
        self.alpha
            * self
                .quads
                .iter()
                .map(|t| d_cc_coords(m, u.point(t[0]), u.point(t[1]), u.point(t[2]), u.point(t[3])))
                .sum::<f64>()
    }
    fn prox(&self, u: &mut Signal, lambda: f64) -> Result<()> {
        let lam = lambda * self.alpha;
        if lam == 0.0 {
            return Ok(());
        }
        let m = u.manifold.clone();
        let moved: Vec<Vec<Vec<f64>>> = self
            .quads
            .par_iter()
            .map(|t| {
                let h = [u.point(t[0]), u.point(t[1]), u.point(t[2]), u.point(t[3])];
                prox_by_descent(
                    &m,
                    &h,
                    lam,
                    &|x| Ok(d_cc_coords(&m, &x[0], &x[1], &x[2], &x[3])),
                    &|x| {
                        let g = dcc_gradient(&m, &x[0], &x[1], &x[2], &x[3])?;
                        Ok(vec![g.u00, g.u10, g.u0m, g.u1m])
                    },
                )
            })
            .collect::<Result<_>>()?;
        for (t, out) in self.quads.iter().zip(moved) {
            for (k, &i) in t.iter().enumerate() {
                u.set_point(i, &out[k]);
            }
        }
        Ok(())
    }
    fn grad(&self, u: &Signal) -> Result<Vec<(usize, Vec<f64>)>> {
        let m = &u.manifold;
        let mut out = Vec::new();
        for t in &self.quads {
            let g = dcc_gradient(m, u.point(t[0]), u.point(t[1]), u.point(t[2]), u.point(t[3]))?;
            out.push((t[0], scaled(&g.u00, self.alpha)));
            out.push((t[1], scaled(&g.u10, self.alpha)));
            out.push((t[2], scaled(&g.u0m, self.alpha)));
            out.push((t[3], scaled(&g.u1m, self.alpha)));
        }
        Ok(out)
    }
}

/// Joint subgradient atom for the isotropically coupled (p = 2) bivariate
/// TV²: per pixel (D_c,row² + D_c,col² + 2·D_cc²)^{1/2}.
pub struct Tv2JointAtom {
    alpha: f64,
    p: f64,
    rows: usize,
    cols: usize,
}

impl Tv2JointAtom {
    pub fn new(alpha: f64, p: f64, rows: usize, cols: usize) -> Self {
        Tv2JointAtom { alpha, p, rows, cols }
    }
}

impl Atom for Tv2JointAtom {
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
        self.alpha * tv2_energy(u, self.p).unwrap_or(f64::INFINITY)
    }
    fn grad(&self, u: &Signal) -> Result<Vec<(usize, Vec<f64>)>> {
        let m = &u.manifold;
        let (rows, cols, p) = (self.rows, self.cols, self.p);
        let idx = |i: usize, j: usize| i * cols + j;
        let dim = m.ambient_dim();
        let mut acc: Vec<Vec<f64>> = vec![vec![0.0; dim]; rows * cols];
        let mut add = |i: usize, v: &[f64], s: f64| {
            for (a, c) in acc[i].iter_mut().zip(v) {
                *a += s * c;
            }
        };
        for i in 0..rows {
            for j in 0..cols {
                let row_ok = i >= 1 && i + 1 < rows;
                let col_ok = j >= 1 && j + 1 < cols;
                let cc_ok = i + 1 < rows && j >= 1;
                let a = if row_ok {
                    d_c_coords(m, u.point(idx(i - 1, j)), u.point(idx(i, j)), u.point(idx(i + 1, j)))
                } else {
                    0.0
                };
                let b = if col_ok {
                    d_c_coords(m, u.point(idx(i, j - 1)), u.point(idx(i, j)), u.point(idx(i, j + 1)))
                } else {
                    0.0
                };
                let c = if cc_ok {
                    d_cc_coords(
                        m,
                        u.point(idx(i, j)),
                        u.point(idx(i + 1, j)),
                        u.point(idx(i, j - 1)),
                        u.point(idx(i + 1, j - 1)),
                    )
                } else {
                    0.0
                };
                let v = (a.powf(p) + b.powf(p) + 2.0 * c.powf(p)).powf(1.0 / p);
                if v < DEGENERATE {
                    continue;
                }
                // ∂/∂t of (Σ t^p)^{1/p} = (t/V)^{p−1}
                if a > DEGENERATE {
                    let wgt = self.alpha * (a / v).powf(p - 1.0);
                    let g = dc_gradient(m, u.point(idx(i - 1, j)), u.point(idx(i, j)), u.point(idx(i + 1, j)))?;
                    add(idx(i - 1, j), &g.left, wgt);
                    add(idx(i, j), &g.center, wgt);
                    add(idx(i + 1, j), &g.right, wgt);
                }
                if b > DEGENERATE {
                    let wgt = self.alpha * (b / v).powf(p - 1.0);
                    let g = dc_gradient(m, u.point(idx(i, j - 1)), u.point(idx(i, j)), u.point(idx(i, j + 1)))?;
                    add(idx(i, j - 1), &g.left, wgt);
                    add(idx(i, j), &g.center, wgt);
                    add(idx(i, j + 1), &g.right, wgt);
                }
                if c > DEGENERATE {
                    let wgt = 2.0 * self.alpha * (c / v).powf(p - 1.0);
                    let g = dcc_gradient(
                        m,
                        u.point(idx(i, j)),
                        u.point(idx(i + 1, j)),
                        u.point(idx(i, j - 1)),
                        u.point(idx(i + 1, j - 1)),
                    )?;
                    add(idx(i, j), &g.u00, wgt);
                    add(idx(i + 1, j), &g.u10, wgt);
                    add(idx(i, j - 1), &g.u0m, wgt);
                    add(idx(i + 1, j - 1), &g.u1m, wgt);
                }
            }
        }
        Ok(acc.into_iter().enumerate().collect())
    }
}

/// Splitting of the TV² regularizer into proximable phase atoms with
/// disjoint footprints (three phases per direction, four parity classes of
/// cross defects on images).
pub fn tv2_atoms(f: &Signal, alpha: f64, p: f64) -> Result<Vec<Box<dyn Atom>>> {
    validate_p(p)?;
    let mut atoms: Vec<Box<dyn Atom>> = Vec::new();
    match f.shape {
        SignalShape::One(n) => {
            for phase in 0..3usize {
                let triples: Vec<[usize; 3]> = (1..n.saturating_sub(1))
                    .filter(|c| c % 3 == phase)
                    .map(|c| [c - 1, c, c + 1])
                    .collect();
                if !triples.is_empty() {
                    atoms.push(Box::new(DcPhaseAtom::new(alpha, triples)));
                }
            }
        }
        SignalShape::Two(rows, cols) => {
            if p == 2.0 {
                atoms.push(Box::new(Tv2JointAtom::new(alpha, p, rows, cols)));
                return Ok(atoms);
            }
            let idx = |i: usize, j: usize| i * cols + j;
            for phase in 0..3usize {
                let triples: Vec<[usize; 3]> = (0..cols)
                    .flat_map(|j| {
                        (1..rows.saturating_sub(1))
                            .filter(|i| i % 3 == phase)
                            .map(move |i| (i, j))
                    })
                    .map(|(i, j)| [idx(i - 1, j), idx(i, j), idx(i + 1, j)])
                    .collect();
                if !triples.is_empty() {
                    atoms.push(Box::new(DcPhaseAtom::new(alpha, triples)));
                }
            }
            for phase in 0..3usize {
                let triples: Vec<[usize; 3]> = (0..rows)
                    .flat_map(|i| {
                        (1..cols.saturating_sub(1))
                            .filter(|j| j % 3 == phase)
                            .map(move |j| (i, j))
                    })
                    .map(|(i, j)| [idx(i, j - 1), idx(i, j), idx(i, j + 1)])
                    .collect();
                if !triples.is_empty() {
                    atoms.push(Box::new(DcPhaseAtom::new(alpha, triples)));
                }
            }
            for pi in 0..2usize {
                for pj in 0..2usize {
                    let quads: Vec<[usize; 4]> = (0..rows.saturating_sub(1))
                        .filter(|i| i % 2 == pi)
                        .flat_map(|i| {
                            (1..cols).filter(|j| j % 2 == pj).map(move |j| (i, j))
                        })
                        .map(|(i, j)| [idx(i, j), idx(i + 1, j), idx(i, j - 1), idx(i + 1, j - 1)])
                        .collect();
                    if !quads.is_empty() {
                        // the mixed defect enters the p = 1 coupling with weight 2
                        atoms.push(Box::new(DccPhaseAtom::new(2.0 * alpha, quads)));
                    }
                }
            }
        }
    }
    Ok(atoms)
}

/// TV²-regularized denoising: (1/q) Σ d(u_i, f_i)^q + α·TV²(u), minimized
/// by the cyclic proximal point scheme over the phase splitting. Images
/// with the isotropic p = 2 coupling have no separable splitting and run
/// plain subgradient descent on the joint energy instead.
pub fn denoise_tv2(
    f: &Signal,
    alpha: f64,
    p: f64,
    q: f64,
    schedule: &SolverSchedule,
) -> Result<SolverOutput> {
    if !(alpha >= 0.0) {
        return Err(MvrError::InvalidArgument(format!("alpha must be nonnegative, got {alpha}")));
    }
    if q != 1.0 && q != 2.0 {
        return Err(MvrError::InvalidArgument(format!("data exponent must be 1 or 2, got {q}")));
    }
    validate_p(p)?;
    let mut atoms: Vec<Box<dyn Atom>> = vec![Box::new(DataAtom::new(f.clone(), q))];
    if alpha > 0.0 {
        atoms.extend(tv2_atoms(f, alpha, p)?);
    }
    let joint = matches!(f.shape, SignalShape::Two(..)) && p == 2.0 && alpha > 0.0;
    if joint {
        subgradient_descent(&atoms, f, schedule)
    } else {
        cppa(&atoms, f, schedule)
    }
}

// ---------------------------------------------------------------------------
// S-TGV denoising
// ---------------------------------------------------------------------------
//
// The S-TGV minimization runs on a packed signal holding the primal samples
// and the tip fields side by side: [u | y] for signals, [u | y¹ | y²] for
// images, all on the same manifold. Atoms address packed indices.

/// Data atom acting on the u-block of a packed state.
struct PackedDataAtom {
    f: Signal,
    q: f64,
}

impl Atom for PackedDataAtom {
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
        (0..self.f.len())
            .map(|i| m.dist(u.point(i), self.f.point(i)).powf(self.q) / self.q)
            .sum()
    }
    fn prox(&self, u: &mut Signal, lambda: f64) -> Result<()> {
        let m = u.manifold.clone();
        let params = ProxParams { lambda, alpha: 1.0, q: self.q, variant: ProxVariant::Power };
        let moved: Vec<Vec<f64>> = (0..self.f.len())
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
        let mut out = Vec::new();
        for i in 0..self.f.len() {
            let d = m.dist(u.point(i), self.f.point(i));
            if d < 1e-14 {
                out.push((i, vec![0.0; m.ambient_dim()]));
                continue;
            }
            let l = checked_log(m, u.point(i), self.f.point(i), "data gradient")?;
            out.push((i, scaled(&l, -d.powf(self.q - 2.0))));
        }
        Ok(out)
    }
}

/// Weighted distance over disjoint index pairs: α Σ d(x_a, x_b), with the
/// closed-form pair prox.
struct TipPairAtom {
    alpha: f64,
    pairs: Vec<(usize, usize)>,
}

impl Atom for TipPairAtom {
    fn role(&self) -> AtomRole {
        AtomRole::Regularizer
    }
    fn kind(&self) -> AtomKind {
        AtomKind::Both
    }
    fn footprint(&self) -> Vec<usize> {
        self.pairs.iter().flat_map(|&(a, b)| [a, b]).collect()
    }
    fn evaluate(&self, u: &Signal) -> f64 {
        let m = &u.manifold;
        self.alpha * self.pairs.iter().map(|&(a, b)| m.dist(u.point(a), u.point(b))).sum::<f64>()
    }
    fn prox(&self, u: &mut Signal, lambda: f64) -> Result<()> {
        let m = u.manifold.clone();
        let params =
            ProxParams { lambda, alpha: self.alpha, q: 1.0, variant: ProxVariant::Power };
        let moved: Vec<(Vec<f64>, Vec<f64>)> = self
            .pairs
            .par_iter()
            .map(|&(a, b)| prox_pair(&m, u.point(a), u.point(b), &params))
            .collect::<Result<_>>()?;
        for (&(a, b), (ca, cb)) in self.pairs.iter().zip(moved) {
            u.set_point(a, &ca);
            u.set_point(b, &cb);
        }
        Ok(())
    }
    fn grad(&self, u: &Signal) -> Result<Vec<(usize, Vec<f64>)>> {
        let m = &u.manifold;
        let mut out = Vec::new();
        for &(a, b) in &self.pairs {
            let d = m.dist(u.point(a), u.point(b));
            if d < 1e-14 {
                continue;
            }
            let la = checked_log(m, u.point(a), u.point(b), "pair gradient")?;
            let lb = checked_log(m, u.point(b), u.point(a), "pair gradient")?;
            out.push((a, scaled(&la, -self.alpha / d)));
            out.push((b, scaled(&lb, -self.alpha / d)));
        }
        Ok(out)
    }
}

/// One parity class of ladder-defect terms α₀ Σ D([x_a,x_b],[x_c,x_d]) over
/// packed index quads (base, tip, previous base, previous tip).
struct DsPhaseAtom {
    alpha: f64,
    variant: TgvVariant,
    quads: Vec<[usize; 4]>,
}

impl DsPhaseAtom {
    fn term(&self, m: &Manifold, x: &[Vec<f64>]) -> Result<f64> {
        tuple_distance(m, self.variant, (&x[0], &x[1]), (&x[2], &x[3]))
    }

    fn term_grad(&self, m: &Manifold, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        match self.variant {
            TgvVariant::Schild => {
                let g = grad_ds(m, (&x[0], &x[1]), (&x[2], &x[3]))?;
                Ok(vec![g.base1, g.tip1, g.base2, g.tip2])
            }
            // No closed-form transport differentials; central differences on
            // each slot of the scalar defect.
            TgvVariant::ParallelTransport => {
                let mut out = Vec::with_capacity(4);
                for slot in 0..4 {
                    let fx = |p: &[f64]| -> Result<f64> {
                        let mut args: Vec<&[f64]> = x.iter().map(|v| v.as_slice()).collect();
                        args[slot] = p;
                        d_pt_coords(m, args[0], args[1], args[2], args[3])
                    };
                    out.push(grad_scalar_fd(m, &fx, &x[slot], 1e-6)?);
                }
                Ok(out)
            }
        }
    }
}

impl Atom for DsPhaseAtom {
    fn role(&self) -> AtomRole {
        AtomRole::Regularizer
    }
    fn kind(&self) -> AtomKind {
        AtomKind::Both
    }
    fn footprint(&self) -> Vec<usize> {
        self.quads.iter().flatten().copied().collect()
    }
    fn evaluate(&self, u: &Signal) -> f64 {
        let m = &u.manifold;
        self.quads
            .iter()
            .map(|t| {
                let x: Vec<Vec<f64>> = t.iter().map(|&i| u.point(i).to_vec()).collect();
                self.term(m, &x).unwrap_or(f64::INFINITY)
            })
            .sum::<f64>()
            * self.alpha
    }
    fn prox(&self, u: &mut Signal, lambda: f64) -> Result<()> {
        let lam = lambda * self.alpha;
        if lam == 0.0 {
            return Ok(());
        }
        let m = u.manifold.clone();
        let moved: Vec<Vec<Vec<f64>>> = self
            .quads
            .par_iter()
            .map(|t| {
                let h = [u.point(t[0]), u.point(t[1]), u.point(t[2]), u.point(t[3])];
                prox_by_descent(
                    &m,
                    &h,
                    lam,
                    &|x| self.term(&m, x),
                    &|x| self.term_grad(&m, x),
                )
            })
            .collect::<Result<_>>()?;
        for (t, out) in self.quads.iter().zip(moved) {
            for (k, &i) in t.iter().enumerate() {
                u.set_point(i, &out[k]);
            }
        }
        Ok(())
    }
    fn grad(&self, u: &Signal) -> Result<Vec<(usize, Vec<f64>)>> {
        let m = &u.manifold;
        let mut out = Vec::new();
        for t in &self.quads {
            let x: Vec<Vec<f64>> = t.iter().map(|&i| u.point(i).to_vec()).collect();
            let g = self.term_grad(m, &x)?;
            for (k, &i) in t.iter().enumerate() {
                out.push((i, scaled(&g[k], self.alpha)));
            }
        }
        Ok(out)
    }
}

/// One parity class of symmetrized cross defects on the packed image state.
/// Each entry lists seven packed indices:
/// [u_{ij}, y¹_{ij}, y²_{ij}, u_{i,j−1}, y¹_{i,j−1}, u_{i−1,j}, y²_{i−1,j}];
/// the shared base u_{ij} receives both base-slot contributions.
struct SymPhaseAtom {
    alpha: f64,
    cells: Vec<[usize; 7]>,
}

impl SymPhaseAtom {
    fn value(m: &Manifold, x: &[Vec<f64>]) -> f64 {
        d_s_sym_coords(m, (&x[0], &x[1]), (&x[0], &x[2]), (&x[3], &x[4]), (&x[5], &x[6]))
    }

    fn gradient(m: &Manifold, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let g = grad_ds_sym(m, (&x[0], &x[1]), (&x[0], &x[2]), (&x[3], &x[4]), (&x[5], &x[6]))?;
        let mut shared = g.tx_base;
        for (a, b) in shared.iter_mut().zip(&g.ty_base) {
            *a += b;
        }
        Ok(vec![shared, g.tx_tip, g.ty_tip, g.prev_x_base, g.prev_x_tip, g.prev_y_base, g.prev_y_tip])
    }
}

impl Atom for SymPhaseAtom {
    fn role(&self) -> AtomRole {
        AtomRole::Regularizer
    }
    fn kind(&self) -> AtomKind {
        AtomKind::Both
    }
    fn footprint(&self) -> Vec<usize> {
        self.cells.iter().flatten().copied().collect()
    }
    fn evaluate(&self, u: &Signal) -> f64 {
        let m = &u.manifold;
        self.alpha
            * self
                .cells
                .iter()
                .map(|t| {
                    let x: Vec<Vec<f64>> = t.iter().map(|&i| u.point(i).to_vec()).collect();
                    Self::value(m, &x)
                })
                .sum::<f64>()
    }
    fn prox(&self, u: &mut Signal, lambda: f64) -> Result<()> {
        let lam = lambda * self.alpha;
        if lam == 0.0 {
            return Ok(());
        }
        let m = u.manifold.clone();
        let moved: Vec<Vec<Vec<f64>>> = self
            .cells
            .par_iter()
            .map(|t| {
                let h: Vec<&[f64]> = t.iter().map(|&i| u.point(i)).collect();
                prox_by_descent(
                    &m,
                    &h,
                    lam,
                    &|x| Ok(Self::value(&m, x)),
                    &|x| Self::gradient(&m, x),
                )
            })
            .collect::<Result<_>>()?;
        for (t, out) in self.cells.iter().zip(moved) {
            for (k, &i) in t.iter().enumerate() {
                u.set_point(i, &out[k]);
            }
        }
        Ok(())
    }
    fn grad(&self, u: &Signal) -> Result<Vec<(usize, Vec<f64>)>> {
        let m = &u.manifold;
        let mut out = Vec::new();
        for t in &self.cells {
            let x: Vec<Vec<f64>> = t.iter().map(|&i| u.point(i).to_vec()).collect();
            let g = Self::gradient(m, &x)?;
            for (k, &i) in t.iter().enumerate() {
                out.push((i, scaled(&g[k], self.alpha)));
            }
        }
        Ok(out)
    }
}

/// Joint subgradient atom for the p = 2 coupled bivariate S-TGV regularizer
/// on the packed [u | y¹ | y²] state.
struct StgvJointAtom {
    w: TGVWeights,
    rows: usize,
    cols: usize,
}

impl Atom for StgvJointAtom {
    fn role(&self) -> AtomRole {
        AtomRole::Regularizer
    }
    fn kind(&self) -> AtomKind {
        AtomKind::Differentiable
    }
    fn footprint(&self) -> Vec<usize> {
        (0..3 * self.rows * self.cols).collect()
    }
    fn evaluate(&self, x: &Signal) -> f64 {
        let m = &x.manifold;
        let (rows, cols) = (self.rows, self.cols);
        let n = rows * cols;
        let pu = |i: usize, j: usize| i * cols + j;
        let p1 = |i: usize, j: usize| n + i * cols + j;
        let p2 = |i: usize, j: usize| 2 * n + i * cols + j;
        let p = self.w.p;
        let mut total = 0.0;
        for i in 0..rows {
            for j in 0..cols {
                let a = if i + 1 < rows { m.dist(x.point(pu(i + 1, j)), x.point(p1(i, j))) } else { 0.0 };
                let b = if j + 1 < cols { m.dist(x.point(pu(i, j + 1)), x.point(p2(i, j))) } else { 0.0 };
                if a > 0.0 || b > 0.0 {
                    total += self.w.alpha1 * (a.powf(p) + b.powf(p)).powf(1.0 / p);
                }
                let dv = if i >= 1 {
                    d_s_coords(m, x.point(pu(i, j)), x.point(p1(i, j)), x.point(pu(i - 1, j)), x.point(p1(i - 1, j)))
                } else {
                    0.0
                };
                let dh = if j >= 1 {
                    d_s_coords(m, x.point(pu(i, j)), x.point(p2(i, j)), x.point(pu(i, j - 1)), x.point(p2(i, j - 1)))
                } else {
                    0.0
                };
                let ds = if i >= 1 && j >= 1 {
                    d_s_sym_coords(
                        m,
                        (x.point(pu(i, j)), x.point(p1(i, j))),
                        (x.point(pu(i, j)), x.point(p2(i, j))),
                        (x.point(pu(i, j - 1)), x.point(p1(i, j - 1))),
                        (x.point(pu(i - 1, j)), x.point(p2(i - 1, j))),
                    )
                } else {
                    0.0
                };
                if dv > 0.0 || dh > 0.0 || ds > 0.0 {
                    total += self.w.alpha0 * (dv.powf(p) + dh.powf(p) + 2.0 * ds.powf(p)).powf(1.0 / p);
                }
            }
        }
        total
    }
    fn grad(&self, x: &Signal) -> Result<Vec<(usize, Vec<f64>)>> {
        let m = &x.manifold;
        let (rows, cols) = (self.rows, self.cols);
        let n = rows * cols;
        let pu = |i: usize, j: usize| i * cols + j;
        let p1 = |i: usize, j: usize| n + i * cols + j;
        let p2 = |i: usize, j: usize| 2 * n + i * cols + j;
        let p = self.w.p;
        let dim = m.ambient_dim();
        let mut acc: Vec<Vec<f64>> = vec![vec![0.0; dim]; 3 * n];
        let mut add = |i: usize, v: &[f64], s: f64| {
            for (a, c) in acc[i].iter_mut().zip(v) {
                *a += s * c;
            }
        };
        for i in 0..rows {
            for j in 0..cols {
                let a = if i + 1 < rows { m.dist(x.point(pu(i + 1, j)), x.point(p1(i, j))) } else { 0.0 };
                let b = if j + 1 < cols { m.dist(x.point(pu(i, j + 1)), x.point(p2(i, j))) } else { 0.0 };
                let v1 = (a.powf(p) + b.powf(p)).powf(1.0 / p);
                if v1 > DEGENERATE {
                    if a > DEGENERATE {
                        let wgt = self.w.alpha1 * (a / v1).powf(p - 1.0) / a;
                        let la = checked_log(m, x.point(pu(i + 1, j)), x.point(p1(i, j)), "tgv gradient")?;
                        let lb = checked_log(m, x.point(p1(i, j)), x.point(pu(i + 1, j)), "tgv gradient")?;
                        add(pu(i + 1, j), &la, -wgt);
                        add(p1(i, j), &lb, -wgt);
                    }
                    if b > DEGENERATE {
                        let wgt = self.w.alpha1 * (b / v1).powf(p - 1.0) / b;
                        let la = checked_log(m, x.point(pu(i, j + 1)), x.point(p2(i, j)), "tgv gradient")?;
                        let lb = checked_log(m, x.point(p2(i, j)), x.point(pu(i, j + 1)), "tgv gradient")?;
                        add(pu(i, j + 1), &la, -wgt);
                        add(p2(i, j), &lb, -wgt);
                    }
                }

                let dv = if i >= 1 {
                    d_s_coords(m, x.point(pu(i, j)), x.point(p1(i, j)), x.point(pu(i - 1, j)), x.point(p1(i - 1, j)))
                } else {
                    0.0
                };
                let dh = if j >= 1 {
                    d_s_coords(m, x.point(pu(i, j)), x.point(p2(i, j)), x.point(pu(i, j - 1)), x.point(p2(i, j - 1)))
                } else {
                    0.0
                };
                let ds = if i >= 1 && j >= 1 {
                    d_s_sym_coords(
                        m,
                        (x.point(pu(i, j)), x.point(p1(i, j))),
                        (x.point(pu(i, j)), x.point(p2(i, j))),
                        (x.point(pu(i, j - 1)), x.point(p1(i, j - 1))),
                        (x.point(pu(i - 1, j)), x.point(p2(i - 1, j))),
                    )
                } else {
                    0.0
                };
                let v0 = (dv.powf(p) + dh.powf(p) + 2.0 * ds.powf(p)).powf(1.0 / p);
                if v0 < DEGENERATE {
                    continue;
                }
                if dv > DEGENERATE {
                    let wgt = self.w.alpha0 * (dv / v0).powf(p - 1.0);
                    let g = grad_ds(
                        m,
                        (x.point(pu(i, j)), x.point(p1(i, j))),
                        (x.point(pu(i - 1, j)), x.point(p1(i - 1, j))),
                    )?;
                    add(pu(i, j), &g.base1, wgt);
                    add(p1(i, j), &g.tip1, wgt);
                    add(pu(i - 1, j), &g.base2, wgt);
                    add(p1(i - 1, j), &g.tip2, wgt);
                }
                if dh > DEGENERATE {
                    let wgt = self.w.alpha0 * (dh / v0).powf(p - 1.0);
                    let g = grad_ds(
                        m,
                        (x.point(pu(i, j)), x.point(p2(i, j))),
                        (x.point(pu(i, j - 1)), x.point(p2(i, j - 1))),
                    )?;
                    add(pu(i, j), &g.base1, wgt);
                    add(p2(i, j), &g.tip1, wgt);
                    add(pu(i, j - 1), &g.base2, wgt);
                    add(p2(i, j - 1), &g.tip2, wgt);
                }
                if ds > DEGENERATE {
                    let wgt = 2.0 * self.w.alpha0 * (ds / v0).powf(p - 1.0);
                    let g = grad_ds_sym(
                        m,
                        (x.point(pu(i, j)), x.point(p1(i, j))),
                        (x.point(pu(i, j)), x.point(p2(i, j))),
                        (x.point(pu(i, j - 1)), x.point(p1(i, j - 1))),
                        (x.point(pu(i - 1, j)), x.point(p2(i - 1, j))),
                    )?;
                    add(pu(i, j), &g.tx_base, wgt);
                    add(pu(i, j), &g.ty_base, wgt);
                    add(p1(i, j), &g.tx_tip, wgt);
                    add(p2(i, j), &g.ty_tip, wgt);
                    add(pu(i, j - 1), &g.prev_x_base, wgt);
                    add(p1(i, j - 1), &g.prev_x_tip, wgt);
                    add(pu(i - 1, j), &g.prev_y_base, wgt);
                    add(p2(i - 1, j), &g.prev_y_tip, wgt);
                }
            }
        }
        Ok(acc.into_iter().enumerate().collect())
    }
}

/// Result of an S-TGV denoising run: the primal signal, the optimized tip
/// field(s), and the energy trace of the packed iteration.
#[derive(Clone, Debug)]
pub struct StgvOutput {
    pub u: Signal,
    pub y1: Signal,
    /// Column-direction tips; present for images only.
    pub y2: Option<Signal>,
    pub trace: Vec<TraceRow>,
}

fn pack_signals(parts: &[&Signal]) -> Signal {
    let m = parts[0].manifold.clone();
    let total: usize = parts.iter().map(|s| s.len()).sum();
    let mut coords = Vec::with_capacity(total * m.ambient_dim());
    for s in parts {
        coords.extend_from_slice(s.data());
    }
    Signal::from_coords(m, SignalShape::One(total), coords)
        .expect("packed state from valid signals")
}

fn unpack_block(packed: &Signal, start: usize, shape: SignalShape) -> Signal {
    let dim = packed.manifold.ambient_dim();
    let len = shape.len();
    let coords = packed.data()[start * dim..(start + len) * dim].to_vec();
    Signal::from_coords(packed.manifold.clone(), shape, coords).expect("unpacked block")
}

/// Initial tip field along one direction: y_i = u_{i+1}, with the final tip
/// extended geodesically so that tuples on geodesic signals start at zero
/// defect.
fn initial_tips_1d(u: &Signal) -> Signal {
    let m = &u.manifold;
    let n = u.len();
    let mut coords = Vec::with_capacity(n * m.ambient_dim());
    for i in 0..n {
        if i + 1 < n {
            coords.extend_from_slice(u.point(i + 1));
        } else if n >= 2 {
            coords.extend(m.geopoint(u.point(n - 2), u.point(n - 1), 2.0).value);
        } else {
            coords.extend_from_slice(u.point(i));
        }
    }
    Signal::from_coords(m.clone(), SignalShape::One(n), coords).expect("tip field")
}

fn initial_tips_2d(u: &Signal, along_rows: bool) -> Signal {
    let m = &u.manifold;
    let (rows, cols) = u.dims();
    let idx = |i: usize, j: usize| i * cols + j;
    let mut coords = Vec::with_capacity(rows * cols * m.ambient_dim());
    for i in 0..rows {
        for j in 0..cols {
            let (ok, next, prev) = if along_rows {
                (i + 1 < rows, idx(i + 1, j).min(rows * cols - 1), if i >= 1 { idx(i - 1, j) } else { idx(i, j) })
            } else {
                (j + 1 < cols, idx(i, j + 1).min(rows * cols - 1), if j >= 1 { idx(i, j - 1) } else { idx(i, j) })
            };
            if ok {
                coords.extend_from_slice(u.point(next));
            } else if prev != idx(i, j) {
                coords.extend(m.geopoint(u.point(prev), u.point(idx(i, j)), 2.0).value);
            } else {
                coords.extend_from_slice(u.point(idx(i, j)));
            }
        }
    }
    Signal::from_coords(m.clone(), u.shape, coords).expect("tip field")
}

/// S-TGV denoising of a univariate signal or an image. The tip fields are
/// optimized jointly with the signal: the packed state runs through the
/// cyclic proximal scheme (p = 1; ladder defects by inner subgradient
/// solves) or joint subgradient descent (p = 2 images). Tips start at
/// y_i = u_{i+1}, so geodesic inputs are exact fixed points.
pub fn denoise_stgv(
    f: &Signal,
    w: &TGVWeights,
    q: f64,
    schedule: &SolverSchedule,
) -> Result<StgvOutput> {
    w.validate()?;
    if q != 1.0 && q != 2.0 {
        return Err(MvrError::InvalidArgument(format!("data exponent must be 1 or 2, got {q}")));
    }
    match f.shape {
        SignalShape::One(n) => {
            let tips = initial_tips_1d(f);
            let packed = pack_signals(&[f, &tips]);
            let mut atoms: Vec<Box<dyn Atom>> =
                vec![Box::new(PackedDataAtom { f: f.clone(), q })];
            let pairs: Vec<(usize, usize)> = (0..n.saturating_sub(1)).map(|i| (i + 1, n + i)).collect();
            if !pairs.is_empty() {
                atoms.push(Box::new(TipPairAtom { alpha: w.alpha1, pairs }));
            }
            for parity in 0..2usize {
                let quads: Vec<[usize; 4]> = (1..n)
                    .filter(|i| i % 2 == parity)
                    .map(|i| [i, n + i, i - 1, n + i - 1])
                    .collect();
                if !quads.is_empty() {
                    atoms.push(Box::new(DsPhaseAtom { alpha: w.alpha0, variant: w.variant, quads }));
                }
            }
            let out = cppa(&atoms, &packed, schedule)?;
            let u = unpack_block(&out.signal, 0, SignalShape::One(n));
            let y1 = unpack_block(&out.signal, n, SignalShape::One(n));
            Ok(StgvOutput { u, y1, y2: None, trace: out.trace })
        }
        SignalShape::Two(rows, cols) => {
            if w.variant != TgvVariant::Schild {
                return Err(MvrError::InvalidArgument(
                    "bivariate tgv denoising is only available for the Schild variant".into(),
                ));
            }
            let n = rows * cols;
            let y1 = initial_tips_2d(f, true);
            let y2 = initial_tips_2d(f, false);
            let packed = pack_signals(&[f, &y1, &y2]);
            let mut atoms: Vec<Box<dyn Atom>> =
                vec![Box::new(PackedDataAtom { f: f.clone(), q })];
            let pu = |i: usize, j: usize| i * cols + j;
            let p1 = |i: usize, j: usize| n + i * cols + j;
            let p2 = |i: usize, j: usize| 2 * n + i * cols + j;
            if w.p == 2.0 {
                atoms.push(Box::new(StgvJointAtom { w: *w, rows, cols }));
                let out = subgradient_descent(&atoms, &packed, schedule)?;
                let u = unpack_block(&out.signal, 0, f.shape);
                let y1 = unpack_block(&out.signal, n, f.shape);
                let y2 = unpack_block(&out.signal, 2 * n, f.shape);
                return Ok(StgvOutput { u, y1, y2: Some(y2), trace: out.trace });
            }
            let vpairs: Vec<(usize, usize)> = (0..rows.saturating_sub(1))
                .flat_map(|i| (0..cols).map(move |j| (i, j)))
                .map(|(i, j)| (pu(i + 1, j), p1(i, j)))
                .collect();
            let hpairs: Vec<(usize, usize)> = (0..rows)
                .flat_map(|i| (0..cols.saturating_sub(1)).map(move |j| (i, j)))
                .map(|(i, j)| (pu(i, j + 1), p2(i, j)))
                .collect();
            for pairs in [vpairs, hpairs] {
                if !pairs.is_empty() {
                    atoms.push(Box::new(TipPairAtom { alpha: w.alpha1, pairs }));
                }
            }
            for parity in 0..2usize {
                let quads: Vec<[usize; 4]> = (1..rows)
                    .filter(|i| i % 2 == parity)
                    .flat_map(|i| (0..cols).map(move |j| (i, j)))
                    .map(|(i, j)| [pu(i, j), p1(i, j), pu(i - 1, j), p1(i - 1, j)])
                    .collect();
                if !quads.is_empty() {
                    atoms.push(Box::new(DsPhaseAtom { alpha: w.alpha0, variant: w.variant, quads }));
                }
            }
            for parity in 0..2usize {
                let quads: Vec<[usize; 4]> = (0..rows)
                    .flat_map(|i| (1..cols).filter(|j| j % 2 == parity).map(move |j| (i, j)))
                    .map(|(i, j)| [pu(i, j), p2(i, j), pu(i, j - 1), p2(i, j - 1)])
                    .collect();
                if !quads.is_empty() {
                    atoms.push(Box::new(DsPhaseAtom { alpha: w.alpha0, variant: w.variant, quads }));
                }
            }
            for pi in 0..2usize {
                for pj in 0..2usize {
                    let cells: Vec<[usize; 7]> = (1..rows)
                        .filter(|i| i % 2 == pi)
                        .flat_map(|i| (1..cols).filter(|j| j % 2 == pj).map(move |j| (i, j)))
                        .map(|(i, j)| {
                            [
                                pu(i, j),
                                p1(i, j),
                                p2(i, j),
                                pu(i, j - 1),
                                p1(i, j - 1),
                                pu(i - 1, j),
                                p2(i - 1, j),
                            ]
                        })
                        .collect();
                    if !cells.is_empty() {
                        // the symmetrized defect enters the p = 1 coupling with weight 2
                        atoms.push(Box::new(SymPhaseAtom { alpha: 2.0 * w.alpha0, cells }));
                    }
                }
            }
            let out = cppa(&atoms, &packed, schedule)?;
            let u = unpack_block(&out.signal, 0, f.shape);
            let y1 = unpack_block(&out.signal, n, f.shape);
            let y2 = unpack_block(&out.signal, 2 * n, f.shape);
            Ok(StgvOutput { u, y1, y2: Some(y2), trace: out.trace })
        }
    }
}
