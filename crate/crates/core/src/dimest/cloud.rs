use serde::Serialize;

use crate::error::{Error, Result};

/// Points in ℝⁿ stored row-major in one flat buffer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
    /// Per-point weights; `None` means `1/N` each.
    weights: Option<Vec<f64>>,
    /// Certified bound on each point's distance to the point it stands for.
    resolution: f64,
}

impl PointCloud {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "point dimension must be positive".into(),
            ));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: coords.len().div_ceil(dim) * dim,
                found: coords.len(),
            });
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(
                "point coordinates must be finite".into(),
            ));
        }
        Ok(Self {
            dim,
            coords,
            weights: None,
            resolution: 0.0,
        })
    }

    /// Attach weights; they are normalised to sum to 1.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidProbability(
                "weights must be nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidProbability("weights sum to zero".into()));
        }
        self.weights = Some(weights.into_iter().map(|w| w / total).collect());
        Ok(self)
    }

    /// Copy weights from a cloud with the same number of points, bit for bit.
    pub(crate) fn with_weights_of(mut self, other: &PointCloud) -> Self {
        debug_assert_eq!(self.len(), other.len());
        self.weights = other.weights.clone();
        self
    }

    /// Record the truncation error of the points.
    pub fn with_resolution(mut self, resolution: f64) -> Self {
        self.resolution = resolution.max(0.0);
        self
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Weight of point `i`.
    pub fn weight(&self, i: usize) -> f64 {
        match &self.weights {
            Some(w) => w[i],
            None => 1.0 / self.len() as f64,
        }
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InsufficientData("no points".into()))?;
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.len(),
            });
        }
        Self::new(dim, points.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    /// The first `n` points.
    pub fn truncated(&self, n: usize) -> PointCloud {
        let n = n.min(self.len());
        let cloud = Self {
            dim: self.dim,
            coords: self.coords[..n * self.dim].to_vec(),
            weights: None,
            resolution: self.resolution,
        };
        match &self.weights {
            Some(w) => cloud
                .with_weights(w[..n].to_vec())
                .unwrap_or_else(|_| cloud_without_weights(self, n)),
            None => cloud,
        }
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn cloud_without_weights(src: &PointCloud, n: usize) -> PointCloud {
    PointCloud {
        dim: src.dim,
        coords: src.coords[..n * src.dim].to_vec(),
        weights: None,
        resolution: src.resolution,
    }
}
