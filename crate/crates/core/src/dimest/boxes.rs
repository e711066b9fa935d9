//! Box counting and the coarse multifractal spectrum on the absolute grid
//! `⌊x/r⌋`.

use serde::Serialize;

use super::cloud::PointCloud;
use super::grid::cell_keys;
use super::{ols, Fit, RadiusSchedule};
use crate::error::{Error, Result};
use crate::par;

/// Fewest occupied boxes the coarse spectrum accepts.
pub const MIN_BOXES: usize = 100;

/// Masses of the occupied boxes of side `r`, in key order.
fn box_masses(cloud: &PointCloud, r: f64) -> Result<Vec<f64>> {
    let keys = cell_keys(cloud, r)?;
    let mut keyed: Vec<_> = keys.into_iter().zip(0..cloud.len()).collect();
    keyed.sort_unstable_by_key(|k| k.0);
    let mut masses = Vec::new();
    let mut i = 0;
    while i < keyed.len() {
        let mut j = i;
        let mut m = 0.0;
        while j < keyed.len() && keyed[j].0 == keyed[i].0 {
            m += cloud.weight(keyed[j].1);
            j += 1;
        }
        masses.push(m);
        i = j;
    }
    Ok(masses)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxCount {
    pub fit: Fit,
    pub radii: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Slope of `log N(r)` against `log(1/r)`, `N(r)` the number of occupied
/// boxes of side `r`.
pub fn box_counting(cloud: &PointCloud, schedule: &RadiusSchedule) -> Result<BoxCount> {
    schedule.check_resolution(cloud)?;
    if cloud.is_empty() {
        return Err(Error::InsufficientData("empty cloud".into()));
    }
    if cloud.dim() > super::grid::MAX_GRID_DIM {
        return Err(Error::InvalidParameter(format!(
            "box counting supports at most {} dimensions",
            super::grid::MAX_GRID_DIM
        )));
    }
    let radii = schedule.window_radii();
    let counts: Vec<usize> = par::map_indexed(radii.len(), |k| {
        let mut keys = cell_keys(cloud, radii[k]).expect("dimension checked above");
        keys.sort_unstable();
        keys.dedup();
        keys.len()
    });
    let xs: Vec<f64> = radii.iter().map(|r| (1.0 / r).ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    Ok(BoxCount {
        fit: ols(&xs, &ys)?,
        radii,
        counts,
    })
}

/// How `f(α)` is read off the box masses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub enum CoarseMethod {
    /// Histogram of box exponents `log mᵢ / log r`.
    LevelSets,
    /// Moment method: `α(q)`, `f(q)` from the escort weights `mᵢ^q / Σ m^q`.
    #[default]
    Moments,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoarseSettings {
    pub r: f64,
    pub bin_width: f64,
    pub method: CoarseMethod,
    /// Moment orders for [`CoarseMethod::Moments`].
    pub q_grid: Vec<f64>,
}

impl CoarseSettings {
    pub fn new(r: f64) -> Self {
        Self {
            r,
            bin_width: 0.05,
            method: CoarseMethod::default(),
            q_grid: (-50..=50).map(|k| k as f64 * 0.1).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoarsePoint {
    /// Moment order, for points of the moment curve.
    pub q: Option<f64>,
    pub alpha: f64,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoarseSpectrum {
    pub r: f64,
    pub method: CoarseMethod,
    pub boxes: usize,
    /// One entry per non-empty α bin, at the bin centre.
    pub bins: Vec<CoarsePoint>,
    /// Raw curve, sorted by α.
    pub curve: Vec<CoarsePoint>,
    pub peak: CoarsePoint,
}

impl CoarseSpectrum {
    /// `f̂(α)` by linear interpolation along the curve.
    pub fn f_at(&self, alpha: f64) -> Option<f64> {
        interpolate(&self.curve, alpha)
    }
}

fn interpolate(curve: &[CoarsePoint], alpha: f64) -> Option<f64> {
    let k = curve.partition_point(|p| p.alpha < alpha);
    if k == 0 {
        return curve.first().filter(|p| p.alpha == alpha).map(|p| p.f);
    }
    if k == curve.len() {
        return None;
    }
    let (a, b) = (curve[k - 1], curve[k]);
    if b.alpha == a.alpha {
        return Some(a.f.max(b.f));
    }
    Some(a.f + (b.f - a.f) * (alpha - a.alpha) / (b.alpha - a.alpha))
}

/// Coarse spectrum `f̂(α)` at box size `r`.
pub fn coarse_spectrum(cloud: &PointCloud, settings: &CoarseSettings) -> Result<CoarseSpectrum> {
    let r = settings.r;
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidParameter("box size must lie in (0,1)".into()));
    }
    if !(settings.bin_width > 0.0) {
        return Err(Error::InvalidParameter("bin width must be positive".into()));
    }
    if r < 10.0 * cloud.resolution() {
        return Err(Error::InvalidParameter(format!(
            "box size {r} below resolution floor {}",
            10.0 * cloud.resolution()
        )));
    }
    let masses = box_masses(cloud, r)?;
    if masses.len() < MIN_BOXES {
        return Err(Error::InsufficientData(format!(
            "{} occupied boxes, need at least {MIN_BOXES}",
            masses.len()
        )));
    }
    let log_r = r.ln();
    let log_m: Vec<f64> = masses.iter().map(|m| m.ln()).collect();
    let delta = settings.bin_width;
    let (curve, bins) = match settings.method {
        CoarseMethod::LevelSets => {
            let mut exps: Vec<i64> = log_m
                .iter()
                .map(|l| (l / log_r / delta).floor() as i64)
                .collect();
            exps.sort_unstable();
            let mut bins = Vec::new();
            let mut i = 0;
            while i < exps.len() {
                let j = exps[i..].partition_point(|&e| e == exps[i]) + i;
                bins.push(CoarsePoint {
                    q: None,
                    alpha: (exps[i] as f64 + 0.5) * delta,
                    f: ((j - i) as f64).ln() / -log_r,
                });
                i = j;
            }
            (bins.clone(), bins)
        }
        CoarseMethod::Moments => {
            if settings.q_grid.is_empty() {
                return Err(Error::InvalidParameter(
                    "moment method needs a q grid".into(),
                ));
            }
            let mut curve: Vec<CoarsePoint> = settings
                .q_grid
                .iter()
                .map(|&q| {
                    let top = log_m
                        .iter()
                        .map(|l| q * l)
                        .fold(f64::NEG_INFINITY, f64::max);
                    let log_z = top + log_m.iter().map(|l| (q * l - top).exp()).sum::<f64>().ln();
                    let mean_log_m: f64 = log_m.iter().map(|l| (q * l - log_z).exp() * l).sum();
                    let alpha = mean_log_m / log_r;
                    CoarsePoint {
                        q: Some(q),
                        alpha,
                        f: q * alpha - log_z / log_r,
                    }
                })
                .collect();
            curve.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
            let lo = (curve[0].alpha / delta).floor() as i64;
            let hi = (curve[curve.len() - 1].alpha / delta).floor() as i64;
            let bins = (lo..=hi)
                .filter_map(|k| {
                    let alpha = (k as f64 + 0.5) * delta;
                    interpolate(&curve, alpha).map(|f| CoarsePoint { q: None, alpha, f })
                })
                .collect();
            (curve, bins)
        }
    };
    let peak = *curve
        .iter()
        .max_by(|a, b| a.f.total_cmp(&b.f))
        .expect("non-empty curve");
    Ok(CoarseSpectrum {
        r,
        method: settings.method,
        boxes: masses.len(),
        bins,
        curve,
        peak,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::SimilarityIfs;
    use crate::measures::{BernoulliMeasure, Measure};
    use rand::Rng;

    fn cantor(p: &[f64], n: usize, seed: u64) -> PointCloud {
        let mu: Measure = BernoulliMeasure::new(p.to_vec()).unwrap().into();
        SimilarityIfs::cantor()
            .sample_points(&mu, n, 1e-12, seed)
            .unwrap()
    }

    #[test]
    fn box_counting_examples() {
        let mut rng = crate::par::stream_rng(1, 0);
        let square =
            PointCloud::new(2, (0..2_000_000).map(|_| rng.random::<f64>()).collect()).unwrap();
        let fit = box_counting(&square, &RadiusSchedule::dyadic(2, 7).unwrap())
            .unwrap()
            .fit;
        assert!((fit.slope - 2.0).abs() < 0.1, "{fit:?}");
        let c = cantor(&[0.5, 0.5], 200_000, 1);
        let fit = box_counting(&c, &RadiusSchedule::dyadic(2, 12).unwrap())
            .unwrap()
            .fit;
        assert!((fit.slope - 2f64.ln() / 3f64.ln()).abs() < 0.05, "{fit:?}");
        let atom = PointCloud::new(1, vec![0.1; 10]).unwrap();
        let fit = box_counting(&atom, &RadiusSchedule::dyadic(2, 8).unwrap())
            .unwrap()
            .fit;
        assert_eq!(fit.slope, 0.0);
    }

    #[test]
    fn uniform_cantor_is_monofractal() {
        let c = cantor(&[0.5, 0.5], 500_000, 2);
        let s0 = 2f64.ln() / 3f64.ln();
        let r = 3f64.powi(-8);
        for method in [CoarseMethod::LevelSets, CoarseMethod::Moments] {
            let spec = coarse_spectrum(
                &c,
                &CoarseSettings {
                    method,
                    ..CoarseSettings::new(r)
                },
            )
            .unwrap();
            assert!(
                (spec.peak.alpha - s0).abs() < 0.05,
                "{method:?} {:?}",
                spec.peak
            );
            assert!(
                (spec.peak.f - s0).abs() < 0.05,
                "{method:?} {:?}",
                spec.peak
            );
        }
        let levels = coarse_spectrum(
            &c,
            &CoarseSettings {
                method: CoarseMethod::LevelSets,
                ..CoarseSettings::new(r)
            },
        )
        .unwrap();
        assert!(levels.bins.len() <= 3);
    }

    #[test]
    fn empty_bins_are_absent() {
        let c = cantor(&[0.25, 0.75], 200_000, 3);
        let spec = coarse_spectrum(
            &c,
            &CoarseSettings {
                method: CoarseMethod::LevelSets,
                ..CoarseSettings::new(3f64.powi(-7))
            },
        )
        .unwrap();
        assert!(spec.bins.iter().all(|b| b.f.is_finite() && b.f >= 0.0));
        // every reported bin holds at least one box, so f ≥ 0
        assert!(spec.bins.windows(2).all(|w| w[0].alpha < w[1].alpha));
    }

    #[test]
    fn too_few_boxes_rejected() {
        let atom = PointCloud::new(1, vec![0.5; 1000]).unwrap();
        assert!(matches!(
            coarse_spectrum(&atom, &CoarseSettings::new(0.01)),
            Err(Error::InsufficientData(_))
        ));
    }
}
