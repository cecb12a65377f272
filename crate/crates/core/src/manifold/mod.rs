//! Concrete Riemannian geometries: Euclidean space ℝᵈ, the circle S¹ (angle
//! representation), the unit sphere Sⁿ, the rotation group SO(3), symmetric
//! positive definite matrices SPD(n) with the affine-invariant metric, and
//! finite products of these.
//!
//! Points and tangent vectors live in flat ambient coordinate vectors:
//! one angle for the circle, n+1 unit-vector components for Sⁿ, 9 row-major
//! entries for SO(3), n² row-major entries for SPD(n), concatenations for
//! products. Every operation that leaves the manifold (exp, geodesic points)
//! re-projects its result, so constraint drift cannot accumulate over long
//! solver runs.
//!
//! Operations whose value is ambiguous on the cut locus (log, geopoint)
//! return a [`Flagged`] envelope: a deterministic branch is always produced
//! and `non_unique` records that another equally short choice existed.

mod circle;
pub mod diff;
mod rotations;
mod sphere;
mod spd;

use crate::error::{MvrError, Result};
use std::f64::consts::PI;

/// Result envelope for operations with a cut-locus ambiguity. The value is
/// always usable; `non_unique` marks that the deterministic tie-break fired.
#[derive(Clone, Debug, PartialEq)]
pub struct Flagged<T> {
    pub value: T,
    pub non_unique: bool,
}

impl<T> Flagged<T> {
    pub fn unique(value: T) -> Self {
        Flagged { value, non_unique: false }
    }

    pub fn flagged(value: T) -> Self {
        Flagged { value, non_unique: true }
    }

    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> Flagged<U> {
        Flagged { value: f(self.value), non_unique: self.non_unique }
    }
}

/// A concrete geometry. Product factors are kept flat (no nested products)
/// and ambient coordinates of a product are the concatenated factor coords.
#[derive(Clone, Debug, PartialEq)]
pub enum Manifold {
    /// ℝᵈ with the usual inner product.
    Euclidean(usize),
    /// S¹ as an angle in [−π, π).
    Circle,
    /// Unit sphere Sⁿ ⊂ ℝⁿ⁺¹.
    Sphere(usize),
    /// SO(3) with the bi-invariant metric ⟨A,B⟩ = ½·tr(AᵀB), so a rotation
    /// by θ about a fixed axis is at distance θ from the identity.
    Rotations3,
    /// SPD(n) with the affine-invariant metric ⟨V,W⟩_P = tr(P⁻¹VP⁻¹W).
    Spd(usize),
    /// Finite product; ≥ 2 factors, flattened.
    Product(Vec<Manifold>),
}

impl Manifold {
    /// Builds a product manifold, flattening nested products.
    pub fn product(factors: Vec<Manifold>) -> Result<Manifold> {
        let mut flat = Vec::with_capacity(factors.len());
        for f in factors {
            match f {
                Manifold::Product(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        if flat.len() < 2 {
            return Err(MvrError::InvalidArgument(
                "product manifold needs at least two factors".into(),
            ));
        }
        Ok(Manifold::Product(flat))
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            Manifold::Euclidean(d) => *d,
            Manifold::Circle => 1,
            Manifold::Sphere(n) => n + 1,
            Manifold::Rotations3 => 9,
            Manifold::Spd(n) => n * n,
            Manifold::Product(fs) => fs.iter().map(|f| f.ambient_dim()).sum(),
        }
    }

    pub fn intrinsic_dim(&self) -> usize {
        match self {
            Manifold::Euclidean(d) => *d,
            Manifold::Circle => 1,
            Manifold::Sphere(n) => *n,
            Manifold::Rotations3 => 3,
            Manifold::Spd(n) => n * (n + 1) / 2,
            Manifold::Product(fs) => fs.iter().map(|f| f.intrinsic_dim()).sum(),
        }
    }

    /// Canonical textual name, also used by the signal file format.
    pub fn name(&self) -> String {
        match self {
            Manifold::Euclidean(d) => format!("euclidean:{d}"),
            Manifold::Circle => "circle".into(),
            Manifold::Sphere(n) => format!("sphere:{n}"),
            Manifold::Rotations3 => "so3".into(),
            Manifold::Spd(n) => format!("spd:{n}"),
            Manifold::Product(fs) => {
                let names: Vec<String> = fs.iter().map(|f| f.name()).collect();
                format!("product({})", names.join(","))
            }
        }
    }

    /// Factors with their ambient coordinate ranges. A non-product manifold
    /// is its own single factor.
    pub fn factors(&self) -> Vec<(&Manifold, std::ops::Range<usize>)> {
        match self {
            Manifold::Product(fs) => {
                let mut out = Vec::with_capacity(fs.len());
                let mut off = 0;
                for f in fs {
                    let d = f.ambient_dim();
                    out.push((f, off..off + d));
                    off += d;
                }
                out
            }
            m => vec![(m, 0..m.ambient_dim())],
        }
    }

    /// How far `x` is from satisfying the manifold constraint.
    pub fn constraint_violation(&self, x: &[f64]) -> f64 {
        if x.len() != self.ambient_dim() || x.iter().any(|c| !c.is_finite()) {
            return f64::INFINITY;
        }
        match self {
            Manifold::Euclidean(_) => 0.0,
            Manifold::Circle => (x[0].abs() - PI).max(0.0),
            Manifold::Sphere(_) => (norm2(x) - 1.0).abs(),
            Manifold::Rotations3 => rotations::constraint_violation(x),
            Manifold::Spd(n) => spd::constraint_violation(*n, x),
            Manifold::Product(_) => self
                .factors()
                .iter()
                .map(|(f, r)| f.constraint_violation(&x[r.clone()]))
                .fold(0.0, f64::max),
        }
    }

    /// Projects ambient coordinates back onto the manifold (normalization,
    /// polar decomposition, eigenvalue clipping). Applied after every exp.
    pub fn project(&self, x: &mut [f64]) {
        match self {
            Manifold::Euclidean(_) => {}
            Manifold::Circle => x[0] = circle::wrap(x[0]),
            Manifold::Sphere(_) => sphere::project(x),
            Manifold::Rotations3 => rotations::project(x),
            Manifold::Spd(n) => spd::project(*n, x),
            Manifold::Product(_) => {
                for (f, r) in self.factors() {
                    f.project(&mut x[r]);
                }
            }
        }
    }

    /// Projects `v` onto the tangent space at `p`.
    pub fn project_tangent(&self, p: &[f64], v: &mut [f64]) {
        match self {
            Manifold::Euclidean(_) | Manifold::Circle => {}
            Manifold::Sphere(_) => sphere::project_tangent(p, v),
            Manifold::Rotations3 => rotations::project_tangent(p, v),
            Manifold::Spd(n) => spd::project_tangent(*n, v),
            Manifold::Product(_) => {
                for (f, r) in self.factors() {
                    f.project_tangent(&p[r.clone()], &mut v[r]);
                }
            }
        }
    }

    /// Geodesic endpoint exp_p(v). Result is re-projected.
    pub fn exp(&self, p: &[f64], v: &[f64]) -> Vec<f64> {
        match self {
            Manifold::Euclidean(_) => p.iter().zip(v).map(|(a, b)| a + b).collect(),
            Manifold::Circle => vec![circle::wrap(p[0] + v[0])],
            Manifold::Sphere(_) => sphere::exp(p, v),
            Manifold::Rotations3 => rotations::exp(p, v),
            Manifold::Spd(n) => spd::exp(*n, p, v),
            Manifold::Product(_) => {
                let mut out = vec![0.0; self.ambient_dim()];
                for (f, r) in self.factors() {
                    let part = f.exp(&p[r.clone()], &v[r.clone()]);
                    out[r].copy_from_slice(&part);
                }
                out
            }
        }
    }

    /// Inverse of exp: the tangent at `p` pointing to `q` with norm
    /// dist(p, q). On the cut locus a deterministic branch is returned and
    /// the result is flagged: the circle picks the positive direction, the
    /// sphere the axis obtained by projecting out the smallest-magnitude
    /// coordinate direction, SO(3) the π-axis whose first nonzero component
    /// is positive.
    pub fn log(&self, p: &[f64], q: &[f64]) -> Flagged<Vec<f64>> {
        match self {
            Manifold::Euclidean(_) => {
                Flagged::unique(q.iter().zip(p).map(|(b, a)| b - a).collect())
            }
            Manifold::Circle => circle::log(p[0], q[0]).map(|d| vec![d]),
            Manifold::Sphere(_) => sphere::log(p, q),
            Manifold::Rotations3 => rotations::log(p, q),
            Manifold::Spd(n) => Flagged::unique(spd::log(*n, p, q)),
            Manifold::Product(_) => {
                let mut out = vec![0.0; self.ambient_dim()];
                let mut non_unique = false;
                for (f, r) in self.factors() {
                    let part = f.log(&p[r.clone()], &q[r.clone()]);
                    non_unique |= part.non_unique;
                    out[r].copy_from_slice(&part.value);
                }
                Flagged { value: out, non_unique }
            }
        }
    }

    /// Geodesic distance.
    pub fn dist(&self, p: &[f64], q: &[f64]) -> f64 {
        match self {
            Manifold::Euclidean(_) => {
                p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
            }
            Manifold::Circle => circle::dist(p[0], q[0]),
            Manifold::Sphere(_) => sphere::dist(p, q),
            Manifold::Rotations3 => rotations::dist(p, q),
            Manifold::Spd(n) => spd::dist(*n, p, q),
            Manifold::Product(_) => self
                .factors()
                .iter()
                .map(|(f, r)| {
                    let d = f.dist(&p[r.clone()], &q[r.clone()]);
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Point [p,q]_t on the geodesic from p (t=0) to q (t=1). Values of t
    /// outside [0,1] extend the geodesic (needed by Schild's ladder).
    pub fn geopoint(&self, p: &[f64], q: &[f64], t: f64) -> Flagged<Vec<f64>> {
        if t == 0.0 {
            return Flagged::unique(p.to_vec());
        }
        let l = self.log(p, q);
        let scaled: Vec<f64> = l.value.iter().map(|c| c * t).collect();
        Flagged { value: self.exp(p, &scaled), non_unique: l.non_unique }
    }

    /// Parallel transport of `v` from T_p to T_q along the minimal geodesic.
    /// SO(3) uses left translation (a bi-invariant isometric identification)
    /// rather than Levi-Civita transport; they agree to second order in the
    /// step, which is all the solver schemes rely on.
    pub fn transport(&self, p: &[f64], q: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        match self {
            Manifold::Euclidean(_) | Manifold::Circle => Ok(v.to_vec()),
            Manifold::Sphere(_) => {
                let l = self.log(p, q);
                if l.non_unique {
                    return Err(MvrError::CutLocus(
                        "parallel transport between antipodal sphere points".into(),
                    ));
                }
                Ok(sphere::transport_along(p, &l.value, v))
            }
            Manifold::Rotations3 => rotations::transport_left(p, q, v),
            Manifold::Spd(n) => Ok(spd::transport(*n, p, q, v)),
            Manifold::Product(_) => {
                let mut out = vec![0.0; self.ambient_dim()];
                for (f, r) in self.factors() {
                    let part = f.transport(&p[r.clone()], &q[r.clone()], &v[r.clone()])?;
                    out[r].copy_from_slice(&part);
                }
                Ok(out)
            }
        }
    }

    /// Levi-Civita transport along the geodesic segment exp_p(τ·dir),
    /// τ ∈ [0,1]. Unlike [`Manifold::transport`] this follows the *given*
    /// geodesic (of any length, past the cut locus if need be) and is
    /// Levi-Civita on every manifold including SO(3); the Jacobi-field
    /// differentials require exactly this frame.
    pub fn transport_along(&self, p: &[f64], dir: &[f64], v: &[f64]) -> Vec<f64> {
        match self {
            Manifold::Euclidean(_) | Manifold::Circle => v.to_vec(),
            Manifold::Sphere(_) => sphere::transport_along(p, dir, v),
            Manifold::Rotations3 => rotations::transport_lc_along(p, dir, v),
            Manifold::Spd(n) => spd::transport_along(*n, p, dir, v),
            Manifold::Product(_) => {
                let mut out = vec![0.0; self.ambient_dim()];
                for (f, r) in self.factors() {
                    let part =
                        f.transport_along(&p[r.clone()], &dir[r.clone()], &v[r.clone()]);
                    out[r].copy_from_slice(&part);
                }
                out
            }
        }
    }

    /// Riemannian inner product of tangents `v`, `w` at `p`.
    pub fn inner(&self, p: &[f64], v: &[f64], w: &[f64]) -> f64 {
        match self {
            Manifold::Euclidean(_) | Manifold::Circle | Manifold::Sphere(_) => dot(v, w),
            Manifold::Rotations3 => 0.5 * dot(v, w),
            Manifold::Spd(n) => spd::inner(*n, p, v, w),
            Manifold::Product(_) => self
                .factors()
                .iter()
                .map(|(f, r)| f.inner(&p[r.clone()], &v[r.clone()], &w[r.clone()]))
                .sum(),
        }
    }

    /// Riemannian norm of a tangent at `p`.
    pub fn norm(&self, p: &[f64], v: &[f64]) -> f64 {
        self.inner(p, v, v).max(0.0).sqrt()
    }

    /// Orthonormal basis of the tangent space at `p` (intrinsic_dim vectors
    /// in ambient coordinates). Deterministic in `p`.
    pub fn tangent_basis(&self, p: &[f64]) -> Vec<Vec<f64>> {
        match self {
            Manifold::Euclidean(d) => (0..*d)
                .map(|i| {
                    let mut e = vec![0.0; *d];
                    e[i] = 1.0;
                    e
                })
                .collect(),
            Manifold::Circle => vec![vec![1.0]],
            Manifold::Sphere(_) => sphere::tangent_basis(p),
            Manifold::Rotations3 => rotations::tangent_basis(p),
            Manifold::Spd(n) => spd::tangent_basis(*n, p),
            Manifold::Product(_) => {
                let amb = self.ambient_dim();
                let mut out = Vec::with_capacity(self.intrinsic_dim());
                for (f, r) in self.factors() {
                    for b in f.tangent_basis(&p[r.clone()]) {
                        let mut e = vec![0.0; amb];
                        e[r.clone()].copy_from_slice(&b);
                        out.push(e);
                    }
                }
                out
            }
        }
    }
}

/// A point on a concrete manifold: ambient coordinates plus the geometry tag.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldPoint {
    pub coords: Vec<f64>,
    pub manifold: Manifold,
}

impl ManifoldPoint {
    /// Validates the manifold constraint to 1e-10.
    pub fn new(manifold: Manifold, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != manifold.ambient_dim() {
            return Err(MvrError::InvalidArgument(format!(
                "point on {} needs {} coordinates, got {}",
                manifold.name(),
                manifold.ambient_dim(),
                coords.len()
            )));
        }
        let violation = manifold.constraint_violation(&coords);
        if violation > 1e-10 {
            return Err(MvrError::ConstraintViolation {
                what: "point".into(),
                manifold: manifold.name(),
                violation,
            });
        }
        Ok(ManifoldPoint { coords, manifold })
    }

    /// No validation; for internal use where coords are already on-manifold.
    pub fn new_unchecked(manifold: Manifold, coords: Vec<f64>) -> Self {
        ManifoldPoint { coords, manifold }
    }
}

/// A tangent vector at an explicit base point, in ambient coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub base: ManifoldPoint,
    pub coeffs: Vec<f64>,
}

impl TangentVector {
    /// Validates that `coeffs` lies in the tangent space at `base` to 1e-10.
    pub fn new(base: ManifoldPoint, coeffs: Vec<f64>) -> Result<Self> {
        let mut projected = coeffs.clone();
        base.manifold.project_tangent(&base.coords, &mut projected);
        let drift = coeffs
            .iter()
            .zip(&projected)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if drift > 1e-10 {
            return Err(MvrError::ConstraintViolation {
                what: "tangent vector".into(),
                manifold: base.manifold.name(),
                violation: drift,
            });
        }
        Ok(TangentVector { base, coeffs })
    }

    pub fn new_unchecked(base: ManifoldPoint, coeffs: Vec<f64>) -> Self {
        TangentVector { base, coeffs }
    }

    pub fn norm(&self) -> f64 {
        self.base.manifold.norm(&self.base.coords, &self.coeffs)
    }
}

fn same_manifold(a: &Manifold, b: &Manifold) -> Result<()> {
    if a != b {
        return Err(MvrError::ManifoldMismatch { left: a.name(), right: b.name() });
    }
    Ok(())
}

/// exp_p(v); errors if `v` is not based on `p`'s manifold.
pub fn exp_map(p: &ManifoldPoint, v: &TangentVector) -> Result<ManifoldPoint> {
    same_manifold(&p.manifold, &v.base.manifold)?;
    let coords = p.manifold.exp(&p.coords, &v.coeffs);
    Ok(ManifoldPoint::new_unchecked(p.manifold.clone(), coords))
}

/// log_p(q), flagged on the cut locus.
pub fn log_map(p: &ManifoldPoint, q: &ManifoldPoint) -> Result<Flagged<TangentVector>> {
    same_manifold(&p.manifold, &q.manifold)?;
    Ok(p.manifold
        .log(&p.coords, &q.coords)
        .map(|coeffs| TangentVector::new_unchecked(p.clone(), coeffs)))
}

pub fn dist(p: &ManifoldPoint, q: &ManifoldPoint) -> Result<f64> {
    same_manifold(&p.manifold, &q.manifold)?;
    Ok(p.manifold.dist(&p.coords, &q.coords))
}

/// [p,q]_t, flagged when the connecting geodesic is not unique.
pub fn geopoint(p: &ManifoldPoint, q: &ManifoldPoint, t: f64) -> Result<Flagged<ManifoldPoint>> {
    same_manifold(&p.manifold, &q.manifold)?;
    Ok(p.manifold
        .geopoint(&p.coords, &q.coords, t)
        .map(|coords| ManifoldPoint::new_unchecked(p.manifold.clone(), coords)))
}

/// Parallel transport of `v` from its base `p` to `q`.
pub fn parallel_transport(
    p: &ManifoldPoint,
    q: &ManifoldPoint,
    v: &TangentVector,
) -> Result<TangentVector> {
    same_manifold(&p.manifold, &q.manifold)?;
    same_manifold(&p.manifold, &v.base.manifold)?;
    let coeffs = p.manifold.transport(&p.coords, &q.coords, &v.coeffs)?;
    Ok(TangentVector::new_unchecked(q.clone(), coeffs))
}

/// Riemannian inner product; both tangents must share the base point `p`.
pub fn inner(p: &ManifoldPoint, v: &TangentVector, w: &TangentVector) -> Result<f64> {
    same_manifold(&p.manifold, &v.base.manifold)?;
    same_manifold(&p.manifold, &w.base.manifold)?;
    Ok(p.manifold.inner(&p.coords, &v.coeffs, &w.coeffs))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
