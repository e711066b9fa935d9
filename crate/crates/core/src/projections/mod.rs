//! Random subspaces, orthogonal projection of point clouds and the
//! projection-dimension experiment.

mod ede;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

pub use ede::{
    ede_check, gap_constant, holder_inverse_at, holder_inverse_check, EdeReport, EdeRow,
    EdeSettings, HolderAlpha, HolderReport, HolderSettings,
};

use crate::csv::Table;
use crate::dimest::{correlation_dimension, PairSettings, PointCloud, RadiusSchedule};
use crate::error::{Error, Result};
use crate::ifs::SimilarityIfs;
use crate::measures::Measure;
use crate::{par, row};

/// Rows of an orthonormal frame are orthonormal to this accuracy.
pub const ORTHONORMAL_TOL: f64 = 1e-10;
const MAX_REDRAWS: usize = 16;

/// A `d`-dimensional linear subspace of `ℝⁿ`, stored as `d` orthonormal
/// rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Subspace {
    ambient: usize,
    dim: usize,
    basis: Vec<f64>,
}

impl Subspace {
    pub fn new(ambient: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 || dim > ambient {
            return Err(Error::InvalidParameter(format!(
                "subspace dimension {dim} outside 1..={ambient}"
            )));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != ambient) {
            return Err(Error::DimensionMismatch {
                expected: ambient,
                found: r.len(),
            });
        }
        let s = Self {
            ambient,
            dim,
            basis: rows.concat(),
        };
        let residual = s.orthonormality_residual();
        if !(residual <= ORTHONORMAL_TOL) {
            return Err(Error::NotOrthogonal { index: 0, residual });
        }
        Ok(s)
    }

    /// The line spanned by the `i`-th coordinate vector.
    pub fn axis(ambient: usize, i: usize) -> Result<Self> {
        if i >= ambient {
            return Err(Error::InvalidParameter(format!(
                "axis {i} outside 0..{ambient}"
            )));
        }
        let mut row = vec![0.0; ambient];
        row[i] = 1.0;
        Self::new(ambient, &[row])
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis(&self) -> &[f64] {
        &self.basis
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.basis[i * self.ambient..(i + 1) * self.ambient]
    }

    /// `max |⟨vᵢ, vⱼ⟩ − δᵢⱼ|`.
    pub fn orthonormality_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..=i {
                let dot: f64 = self.row(i).iter().zip(self.row(j)).map(|(a, b)| a * b).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    /// Coordinates of `P_V x` in this basis.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `O V` for an orthogonal `O` (row-major, `n × n`).
    pub fn rotated(&self, o: &[f64]) -> Result<Self> {
        let n = self.ambient;
        if o.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: o.len(),
            });
        }
        let rows: Vec<Vec<f64>> = (0..self.dim)
            .map(|i| {
                let v = self.row(i);
                (0..n)
                    .map(|r| (0..n).map(|c| o[r * n + c] * v[c]).sum())
                    .collect()
            })
            .collect();
        Self::new(n, &rows)
    }
}

/// A subspace drawn from the rotation-invariant measure on `Gr(d, n)`:
/// Gram–Schmidt applied to a standard Gaussian `d × n` matrix.
pub fn sample_subspace(n: usize, d: usize, seed: u64) -> Result<Subspace> {
    if d == 0 || d >= n {
        return Err(Error::InvalidParameter(format!(
            "need 1 ≤ d < n, got d = {d}, n = {n}"
        )));
    }
    let mut rng = par::stream_rng(seed, 0);
    for _ in 0..MAX_REDRAWS {
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(d);
        let mut ok = true;
        for _ in 0..d {
            let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            // modified Gram–Schmidt, twice for stability
            for _ in 0..2 {
                for u in &rows {
                    let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(u).for_each(|(x, y)| *x -= dot * y);
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm > 1e-8) {
                ok = false;
                break;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            rows.push(v);
        }
        if ok {
            return Subspace::new(n, &rows);
        }
    }
    Err(Error::Degenerate(
        "repeated degenerate Gaussian draws".into(),
    ))
}

/// Coordinates of `P_V x` for every point; weights and resolution carry
/// over since `P_V` is 1-Lipschitz.
pub fn project_cloud(cloud: &PointCloud, v: &Subspace) -> Result<PointCloud> {
    if cloud.dim() != v.ambient() {
        return Err(Error::DimensionMismatch {
            expected: v.ambient(),
            found: cloud.dim(),
        });
    }
    let mut coords = Vec::with_capacity(cloud.len() * v.dim());
    for p in cloud.points() {
        coords.extend(v.project(p));
    }
    Ok(PointCloud::new(v.dim(), coords)?
        .with_resolution(cloud.resolution())
        .with_weights_of(cloud))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarstrandSettings {
    /// Dimension of the target subspaces.
    pub d: usize,
    pub directions: usize,
    pub points: usize,
    /// Half-width of the acceptance band around the prediction.
    pub tolerance: f64,
    pub schedule: RadiusSchedule,
    pub max_pairs: u64,
    /// Truncation error allowed when sampling points.
    pub sample_tol: f64,
    pub seed: u64,
    /// An extra, deliberately chosen subspace reported separately.
    pub planted: Option<Subspace>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionEstimate {
    pub index: usize,
    /// Correlation dimension of the projected cloud; NaN when the estimator
    /// had too little data.
    pub estimate: f64,
    pub stderr: f64,
    pub within: bool,
    /// Estimate falls below the prediction by more than the tolerance.
    pub below: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarstrandReport {
    /// `min(d, h/χ)`.
    pub predicted: f64,
    pub source_dimension: f64,
    pub tolerance: f64,
    pub directions: Vec<DirectionEstimate>,
    pub fraction_within: f64,
    /// 5, 25, 50, 75 and 95 % quantiles of the finite estimates.
    pub quantiles: [f64; 5],
    pub planted: Option<DirectionEstimate>,
    /// Directions where the estimator failed.
    pub failures: usize,
}

impl MarstrandReport {
    /// Columns `direction,planted,estimate,stderr,within,below`; the planted
    /// subspace, if any, is the last row.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["direction", "planted", "estimate", "stderr", "within", "below"]);
        let rows = self
            .directions
            .iter()
            .map(|d| (d, false))
            .chain(self.planted.iter().map(|d| (d, true)));
        for (d, planted) in rows {
            t.push(row![d.index, planted, d.estimate, d.stderr, d.within, d.below])
                .expect("six columns");
        }
        t
    }
}

/// Project one sample of `Π μ` onto random `d`-planes and estimate the
/// correlation dimension of each image. Fractions and quantiles are
/// reported; no claim is made about every direction.
pub fn marstrand_experiment(
    ifs: &SimilarityIfs,
    mu: &Measure,
    settings: &MarstrandSettings,
) -> Result<MarstrandReport> {
    let n = ifs.dim();
    if settings.d == 0 || settings.d >= n {
        return Err(Error::InvalidParameter(format!(
            "need 1 ≤ d < {n}, got d = {}",
            settings.d
        )));
    }
    if settings.directions == 0 {
        return Err(Error::InvalidParameter("need at least one direction".into()));
    }
    if let Some(p) = &settings.planted {
        if p.ambient() != n || p.dim() != settings.d {
            return Err(Error::DimensionMismatch {
                expected: settings.d,
                found: p.dim(),
            });
        }
    }
    let source_dimension = ifs.symbolic_dimension(mu)?;
    let predicted = source_dimension.min(settings.d as f64);
    let cloud = ifs.sample_points(
        mu,
        settings.points,
        settings.sample_tol,
        par::derive_seed(settings.seed, 1),
    )?;
    let pairs = PairSettings {
        max_pairs: settings.max_pairs,
        seed: par::derive_seed(settings.seed, 3),
    };
    let estimate = |index: usize, v: &Subspace| -> Result<DirectionEstimate> {
        let image = project_cloud(&cloud, v)?;
        let (estimate, stderr) = match correlation_dimension(&image, &settings.schedule, &pairs) {
            Ok(c) => (c.fit.slope, c.fit.stderr),
            Err(Error::InsufficientData(_)) => (f64::NAN, f64::NAN),
            Err(e) => return Err(e),
        };
        Ok(DirectionEstimate {
            index,
            estimate,
            stderr,
            within: (estimate - predicted).abs() <= settings.tolerance,
            below: estimate < predicted - settings.tolerance,
        })
    };
    let direction_seed = par::derive_seed(settings.seed, 2);
    let directions = par::map_indexed(settings.directions, |i| {
        let v = sample_subspace(n, settings.d, par::derive_seed(direction_seed, i as u64))?;
        estimate(i, &v)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let planted = settings
        .planted
        .as_ref()
        .map(|v| estimate(settings.directions, v))
        .transpose()?;
    let within = directions.iter().filter(|d| d.within).count();
    let mut finite: Vec<f64> = directions
        .iter()
        .map(|d| d.estimate)
        .filter(|x| x.is_finite())
        .collect();
    finite.sort_by(f64::total_cmp);
    let quantiles = [0.05, 0.25, 0.5, 0.75, 0.95].map(|q| quantile_sorted(&finite, q));
    Ok(MarstrandReport {
        predicted,
        source_dimension,
        tolerance: settings.tolerance,
        fraction_within: within as f64 / directions.len() as f64,
        failures: directions.len() - finite.len(),
        directions,
        quantiles,
        planted,
    })
}

/// Linear-interpolated quantile of sorted data.
fn quantile_sorted(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let pos = q * (xs.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    xs[lo] + (xs[hi] - xs[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dimest::box_counting;
    use crate::ifs::SimilarityMap;
    use crate::measures::BernoulliMeasure;
    use std::collections::BTreeSet;

    fn ks_uniform(mut xs: Vec<f64>) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| (x - i as f64 / n).max((i + 1) as f64 / n - x))
            .fold(0.0, f64::max)
    }

    fn angle(v: &Subspace) -> f64 {
        let (a, b) = (v.row(0)[0], v.row(0)[1]);
        b.atan2(a).rem_euclid(std::f64::consts::PI) / std::f64::consts::PI
    }

    #[test]
    fn planar_directions_are_uniform() {
        let angles: Vec<f64> = (0..10_000)
            .map(|i| angle(&sample_subspace(2, 1, i).unwrap()))
            .collect();
        // 1 % critical value of the one-sample KS statistic
        assert!(ks_uniform(angles.clone()) < 1.628 / 100.0);
        // a fixed rotation leaves the law unchanged
        let t: f64 = 0.9;
        let o = [t.cos(), -t.sin(), t.sin(), t.cos()];
        let rotated: Vec<f64> = (0..10_000)
            .map(|i| angle(&sample_subspace(2, 1, i).unwrap().rotated(&o).unwrap()))
            .collect();
        assert!(ks_uniform(rotated) < 1.628 / 100.0);
    }

    #[test]
    fn principal_angles_in_three_dimensions_are_rotation_invariant() {
        // |⟨v, e₃⟩| of a uniform line in ℝ³ is uniform on [0, 1]
        let t: f64 = 1.1;
        let o = [1.0, 0.0, 0.0, 0.0, t.cos(), -t.sin(), 0.0, t.sin(), t.cos()];
        let plain: Vec<f64> = (0..10_000)
            .map(|i| sample_subspace(3, 1, i).unwrap().row(0)[2].abs())
            .collect();
        let turned: Vec<f64> = (0..10_000)
            .map(|i| sample_subspace(3, 1, i).unwrap().rotated(&o).unwrap().row(0)[2].abs())
            .collect();
        assert!(ks_uniform(plain) < 1.628 / 100.0);
        assert!(ks_uniform(turned) < 1.628 / 100.0);
    }

    #[test]
    fn frames_are_orthonormal() {
        for seed in 0..200 {
            for (n, d) in [(2, 1), (3, 1), (3, 2), (5, 3)] {
                let v = sample_subspace(n, d, seed).unwrap();
                assert!(v.orthonormality_residual() <= ORTHONORMAL_TOL);
            }
        }
        assert!(sample_subspace(3, 3, 0).is_err());
        assert!(sample_subspace(3, 0, 0).is_err());
        assert!(Subspace::new(2, &[vec![1.0, 0.1]]).is_err());
    }

    #[test]
    fn projection_onto_an_axis_extracts_a_coordinate() {
        let cloud = PointCloud::new(3, vec![1.0, 2.0, 3.0, -4.0, 5.0, 6.0]).unwrap();
        let p = project_cloud(&cloud, &Subspace::axis(3, 1).unwrap()).unwrap();
        assert_eq!(p.coords(), &[2.0, 5.0]);
        let bad = PointCloud::new(2, vec![0.0, 0.0]).unwrap();
        assert!(project_cloud(&bad, &Subspace::axis(3, 0).unwrap()).is_err());
    }

    #[test]
    fn projection_is_one_lipschitz_and_keeps_weights() {
        let mut rng = par::stream_rng(9, 0);
        let coords: Vec<f64> = (0..3 * 2000).map(|_| rng.random::<f64>()).collect();
        let cloud = PointCloud::new(3, coords)
            .unwrap()
            .with_weights((1..=2000).map(|i| i as f64).collect())
            .unwrap();
        let v = sample_subspace(3, 2, 4).unwrap();
        let p = project_cloud(&cloud, &v).unwrap();
        assert_eq!(p.weights(), cloud.weights());
        for k in 0..10_000 {
            let i = rng.random_range(0..2000);
            let j = (i + 1 + k % 1999) % 2000;
            let d0 = crate::dimest::cloud_dist(cloud.point(i), cloud.point(j));
            let d1 = crate::dimest::cloud_dist(p.point(i), p.point(j));
            assert!(d1 <= d0 * (1.0 + 1e-12));
        }
    }

    fn four_corner() -> SimilarityIfs {
        let t = [[0.0, 0.0], [2.0 / 3.0, 0.0], [0.0, 2.0 / 3.0], [2.0 / 3.0, 2.0 / 3.0]];
        SimilarityIfs::new(
            t.iter()
                .map(|t| SimilarityMap::scaled(1.0 / 3.0, t.to_vec()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn product_cantor_projects_to_the_cantor_set() {
        let f = four_corner();
        let mu: Measure = BernoulliMeasure::uniform(4).unwrap().into();
        let cloud = f.sample_points(&mu, 20_000, 1e-12, 5).unwrap();
        let x = project_cloud(&cloud, &Subspace::axis(2, 0).unwrap()).unwrap();
        let cantor = SimilarityIfs::cantor()
            .sample_points(&BernoulliMeasure::uniform(2).unwrap().into(), 20_000, 1e-12, 6)
            .unwrap();
        // same occupied triadic boxes at depth 6; a point on the shared
        // endpoint of a box and a gap is credited to the box
        let in_cantor = |k: i64| (0..6).all(|j| (k / 3i64.pow(j)) % 3 != 1);
        let boxes = |c: &PointCloud| -> BTreeSet<i64> {
            c.points()
                .map(|p| {
                    let y = p[0] * 729.0;
                    let k = y.floor() as i64;
                    if !in_cantor(k) && y - (k as f64) < 1e-6 {
                        k - 1
                    } else {
                        k.min(728)
                    }
                })
                .collect()
        };
        assert_eq!(boxes(&x), boxes(&cantor));
        assert_eq!(boxes(&x).len(), 64);
        assert!(boxes(&x).into_iter().all(in_cantor));
        let s = RadiusSchedule::dyadic(3, 9).unwrap();
        assert!((box_counting(&x, &s).unwrap().fit.slope - 0.6309).abs() < 0.06);
    }

    #[test]
    fn marstrand_small() {
        let f = four_corner();
        let mu: Measure = BernoulliMeasure::uniform(4).unwrap().into();
        let settings = MarstrandSettings {
            d: 1,
            directions: 12,
            points: 20_000,
            tolerance: 0.1,
            schedule: RadiusSchedule::dyadic(4, 10).unwrap(),
            max_pairs: 1_000_000,
            sample_tol: 1e-12,
            seed: 7,
            planted: Some(Subspace::axis(2, 0).unwrap()),
        };
        let r = marstrand_experiment(&f, &mu, &settings).unwrap();
        assert!((r.source_dimension - 2.0 * 2f64.ln() / 3f64.ln()).abs() < 1e-12);
        assert_eq!(r.predicted, 1.0);
        assert!(r.fraction_within >= 0.75, "{r:?}");
        let planted = r.planted.as_ref().unwrap();
        assert!(planted.below, "{planted:?}");
        let csv = r.to_table().to_csv();
        assert_eq!(csv.lines().count(), 14);
        let again = marstrand_experiment(&f, &mu, &settings).unwrap();
        assert_eq!(again.to_table().to_csv(), csv);
    }
}
