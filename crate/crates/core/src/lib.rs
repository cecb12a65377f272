//! Variational regularization of manifold-valued signals and images.
//!
//! The crate provides concrete Riemannian geometries (Euclidean space, the
//! circle, spheres, SO(3), symmetric positive definite matrices, products),
//! intrinsic means and medians, proximal maps of distance-based data and
//! coupling terms, and solvers for first- and higher-order total variation,
//! Mumford-Shah/Potts segmentation, wavelet-sparse regularization, and
//! deconvolution-type inverse problems, all formulated through geodesic
//! averaging so that every step stays on the manifold.

pub mod atoms;
pub mod error;
pub mod higher_order;
pub mod inverse;
pub mod io;
pub mod manifold;
pub mod metrics;
pub mod mumshah;
pub mod noise;
pub mod prox;
pub mod signal;
pub mod solver;
pub mod stats;
pub mod tv;
pub mod wavelet;

pub use error::{MvrError, Result};
pub use manifold::{Flagged, Manifold, ManifoldPoint, TangentVector};
pub use signal::{Signal, SignalShape};
