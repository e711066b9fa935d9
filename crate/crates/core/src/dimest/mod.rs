//! Empirical dimension and spectrum estimates from point clouds.
//!
//! All slopes are ordinary least squares over a declared window of dyadic
//! radii; there is no automatic window search.

mod boxes;
mod cloud;
mod grid;
mod local;
mod pairs;

use serde::Serialize;

pub use boxes::{
    box_counting, coarse_spectrum, BoxCount, CoarseMethod, CoarsePoint, CoarseSettings,
    CoarseSpectrum,
};
pub use cloud::PointCloud;
pub use grid::GridIndex;
pub use local::{
    local_dimension, mean_local_dimension, relative_dimension_bound, relative_dimension_estimate,
    weak_diametric_regularity_check, LocalDimensions, RegularityReport, RelativeDimension,
};
pub use pairs::{
    correlation_dimension, correlation_sum, empirical_energy, Correlation, CorrelationSum, Energy,
    PairSettings, ENERGY_STABILITY_TOL, ENERGY_TRIM,
};

pub(crate) use cloud::dist as cloud_dist;

use crate::error::{Error, Result};

/// Radii `r_j = r₀·2^{−j}`, `j = 0..=levels`, fitted over `window`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadiusSchedule {
    r0: f64,
    levels: usize,
    window: (usize, usize),
}

/// Fewest scales a fit window may contain.
pub const MIN_WINDOW: usize = 4;

impl RadiusSchedule {
    pub fn new(r0: f64, levels: usize, window: (usize, usize)) -> Result<Self> {
        if !(r0 > 0.0) || !r0.is_finite() {
            return Err(Error::InvalidParameter("r0 must be positive".into()));
        }
        let (lo, hi) = window;
        if lo > hi || hi > levels {
            return Err(Error::InvalidParameter(format!(
                "fit window {lo}..={hi} outside 0..={levels}"
            )));
        }
        if hi - lo + 1 < MIN_WINDOW {
            return Err(Error::InvalidParameter(format!(
                "fit window must contain at least {MIN_WINDOW} scales"
            )));
        }
        Ok(Self { r0, levels, window })
    }

    /// Schedule whose window is every level from `lo` to `hi` with `r₀ = 1`.
    pub fn dyadic(lo: usize, hi: usize) -> Result<Self> {
        Self::new(1.0, hi, (lo, hi))
    }

    pub fn radius(&self, j: usize) -> f64 {
        self.r0 * 0.5f64.powi(j as i32)
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn window(&self) -> (usize, usize) {
        self.window
    }

    /// Radii of the fit window, largest first.
    pub fn window_radii(&self) -> Vec<f64> {
        (self.window.0..=self.window.1)
            .map(|j| self.radius(j))
            .collect()
    }

    /// Smallest radius of the schedule.
    pub fn finest(&self) -> f64 {
        self.radius(self.levels)
    }

    /// Reject schedules reaching below ten times the cloud's truncation
    /// error.
    pub fn check_resolution(&self, cloud: &PointCloud) -> Result<()> {
        let floor = 10.0 * cloud.resolution();
        if self.finest() < floor {
            return Err(Error::InvalidParameter(format!(
                "finest radius {} below resolution floor {floor}",
                self.finest()
            )));
        }
        Ok(())
    }
}

/// Least-squares line `y = slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; 0 with two points.
    pub stderr: f64,
    pub points: usize,
}

pub fn ols(xs: &[f64], ys: &[f64]) -> Result<Fit> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            found: ys.len(),
        });
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::InsufficientData(
            "a fit needs at least two points".into(),
        ));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all abscissae coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if n > 2 {
        let ssr: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| {
                let e = y - slope * x - intercept;
                e * e
            })
            .sum();
        (ssr / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(Fit {
        slope,
        intercept,
        stderr,
        points: n,
    })
}

/// Deterministic probe indices into a cloud of `n` points.
pub(crate) fn probe_indices(n: usize, count: usize, seed: u64) -> Vec<usize> {
    use rand::Rng;
    let mut rng = crate::par::stream_rng(crate::par::derive_seed(seed, 0x5052_4f42), 0);
    (0..count).map(|_| rng.random_range(0..n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_recovers_a_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let fit = ols(&xs, &ys).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-15 && (fit.intercept - 1.0).abs() < 1e-15);
        assert!(fit.stderr < 1e-15);
        assert!(ols(&[1.0], &[1.0]).is_err());
        assert!(ols(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn schedule_validation() {
        assert!(RadiusSchedule::new(1.0, 10, (2, 4)).is_err());
        assert!(RadiusSchedule::new(1.0, 10, (2, 11)).is_err());
        let s = RadiusSchedule::new(0.5, 10, (2, 5)).unwrap();
        assert_eq!(s.window_radii(), vec![0.125, 0.0625, 0.03125, 0.015625]);
        let cloud = PointCloud::new(1, vec![0.0, 1.0])
            .unwrap()
            .with_resolution(1e-4);
        assert!(s.check_resolution(&cloud).is_err());
        assert!(s.check_resolution(&cloud.with_resolution(1e-5)).is_ok());
    }
}
