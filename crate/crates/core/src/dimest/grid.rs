//! Uniform grid hash over a point cloud, stored compressed: points sorted
//! by cell plus a map from cell to its slice.

use std::collections::HashMap;

use super::cloud::{dist, PointCloud};
use crate::error::{Error, Result};

/// Largest ambient dimension the grid supports.
pub const MAX_GRID_DIM: usize = 4;

type Key = [i64; MAX_GRID_DIM];

pub struct GridIndex<'a> {
    cloud: &'a PointCloud,
    cell: f64,
    order: Vec<u32>,
    cells: HashMap<Key, (u32, u32)>,
}

impl<'a> GridIndex<'a> {
    /// Index with cubic cells of side `cell`; queries are exact for radii
    /// up to `cell`.
    pub fn build(cloud: &'a PointCloud, cell: f64) -> Result<Self> {
        if cloud.dim() > MAX_GRID_DIM {
            return Err(Error::InvalidParameter(format!(
                "grid index supports at most {MAX_GRID_DIM} dimensions, got {}",
                cloud.dim()
            )));
        }
        if !(cell > 0.0) {
            return Err(Error::InvalidParameter("grid cell must be positive".into()));
        }
        if cloud.len() > u32::MAX as usize {
            return Err(Error::InvalidParameter(
                "too many points for the grid index".into(),
            ));
        }
        let mut keyed: Vec<(Key, u32)> = cloud
            .points()
            .enumerate()
            .map(|(i, p)| (key(p, cell), i as u32))
            .collect();
        keyed.sort_unstable();
        let mut cells = HashMap::new();
        let mut start = 0usize;
        while start < keyed.len() {
            let k = keyed[start].0;
            let mut end = start + 1;
            while end < keyed.len() && keyed[end].0 == k {
                end += 1;
            }
            cells.insert(k, (start as u32, (end - start) as u32));
            start = end;
        }
        Ok(Self {
            cloud,
            cell,
            order: keyed.into_iter().map(|(_, i)| i).collect(),
            cells,
        })
    }

    pub fn cell(&self) -> f64 {
        self.cell
    }

    /// Distances from `x` to every point within `self.cell` (and possibly a
    /// few farther), paired with the point weights.
    pub fn neighbours(&self, x: &[f64]) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        self.visit(x, |i, d| out.push((d, self.cloud.weight(i))));
        out
    }

    /// Call `f(index, distance)` for every point in the 3ⁿ cells around `x`.
    pub(crate) fn visit(&self, x: &[f64], mut f: impl FnMut(usize, f64)) {
        let n = self.cloud.dim();
        let base = key(x, self.cell);
        let stencil = 3usize.pow(n as u32);
        for code in 0..stencil {
            let mut k = base;
            let mut c = code;
            for slot in k.iter_mut().take(n) {
                *slot += (c % 3) as i64 - 1;
                c /= 3;
            }
            if let Some(&(start, len)) = self.cells.get(&k) {
                for &i in &self.order[start as usize..(start + len) as usize] {
                    let i = i as usize;
                    f(i, dist(x, self.cloud.point(i)));
                }
            }
        }
    }

    /// `μ(B(x, r))` for each radius, all radii at most the cell size.
    pub fn ball_masses(&self, x: &[f64], radii: &[f64]) -> Vec<f64> {
        debug_assert!(radii.iter().all(|&r| r <= self.cell));
        let near = self.neighbours(x);
        radii
            .iter()
            .map(|&r| near.iter().filter(|(d, _)| *d <= r).map(|(_, w)| w).sum())
            .collect()
    }
}

fn key(p: &[f64], cell: f64) -> Key {
    let mut k = [0i64; MAX_GRID_DIM];
    for (slot, &x) in k.iter_mut().zip(p) {
        *slot = (x / cell).floor() as i64;
    }
    k
}

/// Cell of each point in an absolute grid `⌊x/r⌋`.
pub(crate) fn cell_keys(cloud: &PointCloud, r: f64) -> Result<Vec<Key>> {
    if cloud.dim() > MAX_GRID_DIM {
        return Err(Error::InvalidParameter(format!(
            "grid counting supports at most {MAX_GRID_DIM} dimensions, got {}",
            cloud.dim()
        )));
    }
    Ok(cloud.points().map(|p| key(p, r)).collect())
}
