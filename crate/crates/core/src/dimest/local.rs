//! Ball-mass estimators at probe points: local dimension, weak diametric
//! regularity and relative dimension.

use serde::Serialize;

use super::cloud::PointCloud;
use super::grid::GridIndex;
use super::{ols, probe_indices, Fit, RadiusSchedule};
use crate::error::{Error, Result};
use crate::ifs::SimilarityIfs;
use crate::measures::{relative_entropy, MarkovMeasure, Measure};
use crate::par;

/// Fewest points a ball in the fit window may hold.
const MIN_BALL_POINTS: usize = 10;

fn window_masses(grid: &GridIndex, x: &[f64], radii: &[f64]) -> Option<Vec<f64>> {
    let near = grid.neighbours(x);
    radii
        .iter()
        .map(|&r| {
            let (count, mass) = near
                .iter()
                .filter(|(d, _)| *d <= r)
                .fold((0usize, 0.0), |(c, m), (_, w)| (c + 1, m + w));
            (count >= MIN_BALL_POINTS).then_some(mass)
        })
        .collect()
}

fn slope_of_log_mass(radii: &[f64], masses: &[f64]) -> Result<Fit> {
    let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = masses.iter().map(|m| m.ln()).collect();
    ols(&xs, &ys)
}

/// Slope of `log μ(B(x,r))` against `log r` over the schedule's window.
pub fn local_dimension(cloud: &PointCloud, x: &[f64], schedule: &RadiusSchedule) -> Result<Fit> {
    if x.len() != cloud.dim() {
        return Err(Error::DimensionMismatch {
            expected: cloud.dim(),
            found: x.len(),
        });
    }
    schedule.check_resolution(cloud)?;
    let radii = schedule.window_radii();
    let grid = GridIndex::build(cloud, radii[0])?;
    let masses = window_masses(&grid, x, &radii).ok_or_else(|| {
        Error::InsufficientData(format!(
            "fewer than {MIN_BALL_POINTS} neighbours at some window radius"
        ))
    })?;
    slope_of_log_mass(&radii, &masses)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalDimensions {
    pub probes: Vec<usize>,
    /// `None` where a ball in the window held too few points.
    pub fits: Vec<Option<Fit>>,
    pub mean: f64,
    /// Standard error of the mean over resolved probes.
    pub stderr: f64,
    pub skipped: usize,
}

/// Local dimension averaged over `probes` cloud points chosen by `seed`.
pub fn mean_local_dimension(
    cloud: &PointCloud,
    schedule: &RadiusSchedule,
    probes: usize,
    seed: u64,
) -> Result<LocalDimensions> {
    schedule.check_resolution(cloud)?;
    if cloud.is_empty() || probes == 0 {
        return Err(Error::InsufficientData("need points and probes".into()));
    }
    let radii = schedule.window_radii();
    let grid = GridIndex::build(cloud, radii[0])?;
    let idx = probe_indices(cloud.len(), probes, seed);
    let fits: Vec<Option<Fit>> = par::map_indexed(idx.len(), |k| {
        window_masses(&grid, cloud.point(idx[k]), &radii)
            .and_then(|m| slope_of_log_mass(&radii, &m).ok())
    });
    let slopes: Vec<f64> = fits.iter().flatten().map(|f| f.slope).collect();
    if slopes.is_empty() {
        return Err(Error::InsufficientData(
            "no probe had enough neighbours".into(),
        ));
    }
    let n = slopes.len() as f64;
    let mean = slopes.iter().sum::<f64>() / n;
    let var = if slopes.len() > 1 {
        slopes.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(LocalDimensions {
        skipped: fits.iter().filter(|f| f.is_none()).count(),
        probes: idx,
        fits,
        mean,
        stderr: (var / n).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    pub radii: Vec<f64>,
    pub quantile: f64,
    /// Quantile over probes of `log(m(x,2r)/m(x,r)) / log(1/r)` per radius.
    pub statistic: Vec<f64>,
    /// The statistic at the finest radius is below the coarsest one.
    pub decreasing: bool,
}

/// Doubling statistic `log(μB(x,2r)/μB(x,r))/log(1/r)` at probe points.
pub fn weak_diametric_regularity_check(
    cloud: &PointCloud,
    schedule: &RadiusSchedule,
    quantile: f64,
    probes: usize,
    seed: u64,
) -> Result<RegularityReport> {
    if !(0.0..=1.0).contains(&quantile) {
        return Err(Error::InvalidParameter("quantile must lie in [0,1]".into()));
    }
    schedule.check_resolution(cloud)?;
    if cloud.is_empty() || probes == 0 {
        return Err(Error::InsufficientData("need points and probes".into()));
    }
    let radii = schedule.window_radii();
    if radii[0] >= 1.0 {
        return Err(Error::InvalidParameter(
            "window radii must be below 1".into(),
        ));
    }
    let grid = GridIndex::build(cloud, 2.0 * radii[0])?;
    let idx = probe_indices(cloud.len(), probes, seed);
    let rows: Vec<Vec<f64>> = par::map_indexed(idx.len(), |k| {
        let x = cloud.point(idx[k]);
        let doubled: Vec<f64> = radii.iter().map(|r| 2.0 * r).collect();
        let big = grid.ball_masses(x, &doubled);
        let small = grid.ball_masses(x, &radii);
        radii
            .iter()
            .zip(big.iter().zip(&small))
            .map(|(r, (b, s))| (b / s).ln() / (1.0 / r).ln())
            .collect()
    });
    let statistic: Vec<f64> = (0..radii.len())
        .map(|j| {
            let mut col: Vec<f64> = rows.iter().map(|row| row[j]).collect();
            quantile_of(&mut col, quantile)
        })
        .collect();
    let decreasing = statistic.last() <= statistic.first();
    Ok(RegularityReport {
        radii,
        quantile,
        statistic,
        decreasing,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelativeDimension {
    /// Per-probe slope of `log(μB/νB)` against `log r`.
    pub slopes: Vec<f64>,
    /// 5 % and 95 % quantiles of the slopes.
    pub interval: (f64, f64),
    pub min: f64,
    pub max: f64,
    /// First ball with positive `μ` mass and zero `ν` mass.
    pub support_violation: Option<(Vec<f64>, f64)>,
}

impl RelativeDimension {
    pub fn is_infinite(&self) -> bool {
        self.support_violation.is_some()
    }
}

/// Relative dimension of `μ` with respect to `ν` from samples of each.
pub fn relative_dimension_estimate(
    mu: &PointCloud,
    nu: &PointCloud,
    schedule: &RadiusSchedule,
    probes: usize,
    seed: u64,
) -> Result<RelativeDimension> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            found: nu.dim(),
        });
    }
    schedule.check_resolution(mu)?;
    schedule.check_resolution(nu)?;
    if mu.is_empty() || nu.is_empty() || probes == 0 {
        return Err(Error::InsufficientData(
            "need points in both clouds and probes".into(),
        ));
    }
    let radii = schedule.window_radii();
    let grid_mu = GridIndex::build(mu, radii[0])?;
    let grid_nu = GridIndex::build(nu, radii[0])?;
    let idx = probe_indices(mu.len(), probes, seed);
    let per_probe: Vec<std::result::Result<f64, f64>> = par::map_indexed(idx.len(), |k| {
        let x = mu.point(idx[k]);
        let m_mu = grid_mu.ball_masses(x, &radii);
        let m_nu = grid_nu.ball_masses(x, &radii);
        if let Some(j) = m_nu.iter().position(|&m| m == 0.0) {
            return Err(radii[j]);
        }
        let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
        let ys: Vec<f64> = m_mu.iter().zip(&m_nu).map(|(a, b)| (a / b).ln()).collect();
        Ok(ols(&xs, &ys).map(|f| f.slope).unwrap_or(f64::NAN))
    });
    let violation = per_probe
        .iter()
        .enumerate()
        .find_map(|(k, r)| r.err().map(|rad| (mu.point(idx[k]).to_vec(), rad)));
    if let Some(v) = violation {
        return Ok(RelativeDimension {
            slopes: Vec::new(),
            interval: (f64::INFINITY, f64::INFINITY),
            min: f64::INFINITY,
            max: f64::INFINITY,
            support_violation: Some(v),
        });
    }
    let slopes: Vec<f64> = per_probe.into_iter().filter_map(|r| r.ok()).collect();
    let mut sorted = slopes.clone();
    let lo = quantile_of(&mut sorted, 0.05);
    let hi = quantile_of(&mut sorted, 0.95);
    Ok(RelativeDimension {
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        slopes,
        interval: (lo, hi),
        support_violation: None,
    })
}

/// `h(μ‖ν)/(−log γ)`, the exact bound on the relative dimension of two
/// measures coded by the same system (entropy in nats).
pub fn relative_dimension_bound(
    mu: &Measure,
    nu: &MarkovMeasure,
    ifs: &SimilarityIfs,
) -> Result<f64> {
    let h = relative_entropy(mu, nu)?;
    Ok(h / -ifs.metric().gamma().ln())
}

/// Linear-interpolated quantile; sorts `values` in place.
pub(crate) fn quantile_of(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    if values.is_empty() {
        return f64::NAN;
    }
    let pos = q * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    values[lo] + (values[hi] - values[lo]) * (pos - lo as f64)
}
