//! Signals: 1-D or 2-D arrays of points on one manifold, stored as one flat
//! coordinate buffer (row-major for images) for cache-friendly solver loops.

use crate::error::{MvrError, Result};
use crate::manifold::{Manifold, ManifoldPoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignalShape {
    /// n samples.
    One(usize),
    /// rows × cols pixels, row-major.
    Two(usize, usize),
}

impl SignalShape {
    pub fn len(&self) -> usize {
        match self {
            SignalShape::One(n) => *n,
            SignalShape::Two(r, c) => r * c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    pub manifold: Manifold,
    pub shape: SignalShape,
    data: Vec<f64>,
}

impl Signal {
    /// Builds a signal from flat coordinates (sample-major, each sample
    /// `ambient_dim` long). Small constraint drift (≤ 1e-8) is repaired by
    /// re-projection; larger violations are rejected.
    pub fn from_coords(manifold: Manifold, shape: SignalShape, mut data: Vec<f64>) -> Result<Self> {
        let amb = manifold.ambient_dim();
        if data.len() != shape.len() * amb {
            return Err(MvrError::InvalidArgument(format!(
                "signal of {} samples on {} needs {} coordinates, got {}",
                shape.len(),
                manifold.name(),
                shape.len() * amb,
                data.len()
            )));
        }
        for s in 0..shape.len() {
            let chunk = &mut data[s * amb..(s + 1) * amb];
            let violation = manifold.constraint_violation(chunk);
            if violation > 1e-8 {
                return Err(MvrError::ConstraintViolation {
                    what: format!("sample {s}"),
                    manifold: manifold.name(),
                    violation,
                });
            }
            manifold.project(chunk);
        }
        Ok(Signal { manifold, shape, data })
    }

    /// Wraps coordinates that are already canonical without touching them.
    /// Used by the file reader so that loading preserves bytes exactly; the
    /// caller is responsible for constraint checking.
    pub(crate) fn from_canonical_coords(
        manifold: Manifold,
        shape: SignalShape,
        data: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(data.len(), shape.len() * manifold.ambient_dim());
        Signal { manifold, shape, data }
    }

    /// Every sample set to `point`.
    pub fn constant(manifold: Manifold, shape: SignalShape, point: &[f64]) -> Result<Self> {
        let amb = manifold.ambient_dim();
        if point.len() != amb {
            return Err(MvrError::InvalidArgument(format!(
                "point on {} needs {} coordinates, got {}",
                manifold.name(),
                amb,
                point.len()
            )));
        }
        let mut data = Vec::with_capacity(shape.len() * amb);
        for _ in 0..shape.len() {
            data.extend_from_slice(point);
        }
        Signal::from_coords(manifold, shape, data)
    }

    pub fn len(&self) -> usize {
        self.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ambient_dim(&self) -> usize {
        self.manifold.ambient_dim()
    }

    /// (rows, cols); a 1-D signal is treated as a single row.
    pub fn dims(&self) -> (usize, usize) {
        match self.shape {
            SignalShape::One(n) => (1, n),
            SignalShape::Two(r, c) => (r, c),
        }
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        let (_, cols) = self.dims();
        row * cols + col
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let amb = self.ambient_dim();
        &self.data[i * amb..(i + 1) * amb]
    }

    pub fn point_mut(&mut self, i: usize) -> &mut [f64] {
        let amb = self.ambient_dim();
        &mut self.data[i * amb..(i + 1) * amb]
    }

    pub fn set_point(&mut self, i: usize, coords: &[f64]) {
        self.point_mut(i).copy_from_slice(coords);
    }

    pub fn at(&self, row: usize, col: usize) -> &[f64] {
        self.point(self.index(row, col))
    }

    pub fn iter_points(&self) -> impl Iterator<Item = &[f64]> {
        let amb = self.ambient_dim();
        self.data.chunks_exact(amb)
    }

    /// Owned wrapper for sample `i`.
    pub fn manifold_point(&self, i: usize) -> ManifoldPoint {
        ManifoldPoint::new_unchecked(self.manifold.clone(), self.point(i).to_vec())
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Mean pixelwise geodesic distance to `other`; the solver stopping rule
    /// and ΔSNR are built on this.
    pub fn mean_dist(&self, other: &Signal) -> Result<f64> {
        if self.manifold != other.manifold || self.shape != other.shape {
            return Err(MvrError::InvalidArgument(
                "mean distance needs signals of identical manifold and shape".into(),
            ));
        }
        if self.is_empty() {
            return Ok(0.0);
        }
        let sum: f64 = (0..self.len())
            .map(|i| self.manifold.dist(self.point(i), other.point(i)))
            .sum();
        Ok(sum / self.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_major_indexing() {
        let m = Manifold::Euclidean(1);
        let s = Signal::from_coords(
            m,
            SignalShape::Two(2, 3),
            vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
        )
        .unwrap();
        assert_eq!(s.at(0, 2), &[2.0]);
        assert_eq!(s.at(1, 0), &[3.0]);
    }

    #[test]
    fn rejects_far_off_manifold_samples() {
        let bad = Signal::from_coords(Manifold::Sphere(1), SignalShape::One(1), vec![2.0, 0.0]);
        assert!(bad.is_err());
        let ok =
            Signal::from_coords(Manifold::Sphere(1), SignalShape::One(1), vec![1.0 + 1e-10, 0.0]);
        assert!(ok.is_ok(), "tiny drift must be repaired silently");
    }
}
