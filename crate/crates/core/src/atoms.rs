//! The atom abstraction: one summand of a split objective, exposing a
//! proximal map and/or a Riemannian (sub)gradient together with the set of
//! signal indices it touches. Solver engines know nothing about models; they
//! only sweep atoms.

use crate::error::{MvrError, Result};
use crate::signal::Signal;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AtomRole {
    /// Data fidelity summand.
    Data,
    /// Regularizer summand.
    Regularizer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AtomKind {
    Proximable,
    Differentiable,
    /// Supplies both a prox and a gradient.
    Both,
}

impl AtomKind {
    pub fn proximable(self) -> bool {
        matches!(self, AtomKind::Proximable | AtomKind::Both)
    }

    pub fn differentiable(self) -> bool {
        matches!(self, AtomKind::Differentiable | AtomKind::Both)
    }
}

/// One summand F_i of a decomposed objective F = Σ F_i.
///
/// `prox` replaces the footprint samples of `u` by the minimizer of
/// F_i(·) + (1/2λ)·Σ d(u_j, ·_j)²; `grad` returns per-sample tangent
/// coefficients of the Riemannian gradient at the current iterate.
pub trait Atom: Send + Sync {
    fn role(&self) -> AtomRole;

    fn kind(&self) -> AtomKind;

    /// Signal indices this atom reads and writes.
    fn footprint(&self) -> Vec<usize>;

    fn evaluate(&self, u: &Signal) -> f64;

    fn prox(&self, _u: &mut Signal, _lambda: f64) -> Result<()> {
        Err(MvrError::InvalidArgument("atom supplies no proximal map".into()))
    }

    fn grad(&self, _u: &Signal) -> Result<Vec<(usize, Vec<f64>)>> {
        Err(MvrError::InvalidArgument("atom supplies no gradient".into()))
    }
}

/// Splits the total objective into (data, regularizer, total).
pub fn evaluate_energy(atoms: &[&dyn Atom], u: &Signal) -> (f64, f64, f64) {
    let mut data = 0.0;
    let mut reg = 0.0;
    for a in atoms {
        match a.role() {
            AtomRole::Data => data += a.evaluate(u),
            AtomRole::Regularizer => reg += a.evaluate(u),
        }
    }
    (data, reg, data + reg)
}

/// Borrows a boxed atom list as trait-object references.
pub fn atom_refs(atoms: &[Box<dyn Atom>]) -> Vec<&dyn Atom> {
    atoms.iter().map(|a| a.as_ref()).collect()
}
