//! Translation families `fᵢᵗ = λᵢ Oᵢ x + tᵢ` and Monte-Carlo estimates of
//! the transversality exponent.
//!
//! `Π_t(ω)` is linear in `t = (t₀, …, t_{m−1})`: with `L_w` the linear part
//! of `f_w`, `Π_t(ω) = Σ_k L_{ω|k} t_{ω_{k+1}}`. For `ω = u·v^∞` the tail is
//! a geometric series in `L_v`, so the coefficient matrices are exact.

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use super::{InfiniteWord, SimilarityIfs};
use crate::dimest::{ols, Fit};
use crate::error::{Error, Result};
use crate::par;

/// Draws per independently seeded chunk.
const DRAW_CHUNK: usize = 1 << 14;

/// A similarity IFS whose translations range over a box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranslationFamily {
    base: SimilarityIfs,
    lower: Vec<Vec<f64>>,
    upper: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransversalitySettings {
    /// Radii, decreasing.
    pub radii: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    /// Bins with fewer hits are left out of the fit.
    pub min_hits: u64,
}

impl Default for TransversalitySettings {
    fn default() -> Self {
        Self {
            radii: (1..=16).map(|k| 0.5f64.powi(k)).collect(),
            samples: 1_000_000,
            seed: 0,
            min_hits: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransversalityReport {
    pub radii: Vec<f64>,
    pub hits: Vec<u64>,
    pub measure: Vec<f64>,
    /// Which radii entered the fit.
    pub used: Vec<bool>,
    /// `None` when the family is degenerate or too few bins resolve.
    pub fit: Option<Fit>,
    /// `max_r η̂(r) / min(1, r^d)` over the radii with at least `min_hits`
    /// hits; sparser bins are too noisy to bound anything.
    pub k_hat: f64,
    pub degenerate: bool,
    /// `max_{i≠j} λᵢ + λⱼ ≥ 1`.
    pub constraint_violated: bool,
}

impl TranslationFamily {
    /// `lower[i]`, `upper[i]` bound the translation of map `i`.
    pub fn new(base: SimilarityIfs, lower: Vec<Vec<f64>>, upper: Vec<Vec<f64>>) -> Result<Self> {
        let m = base.alphabet().size();
        let n = base.dim();
        if lower.len() != m || upper.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: lower.len().min(upper.len()),
            });
        }
        for (lo, hi) in lower.iter().zip(&upper) {
            if lo.len() != n || hi.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: lo.len().min(hi.len()),
                });
            }
            if lo
                .iter()
                .zip(hi)
                .any(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite())
            {
                return Err(Error::InvalidParameter(
                    "parameter box must satisfy lower ≤ upper".into(),
                ));
            }
        }
        Ok(Self { base, lower, upper })
    }

    /// Every translation ranges over `[lo, hi]ⁿ`.
    pub fn cube(base: SimilarityIfs, lo: f64, hi: f64) -> Result<Self> {
        let m = base.alphabet().size();
        let n = base.dim();
        Self::new(base, vec![vec![lo; n]; m], vec![vec![hi; n]; m])
    }

    pub fn base(&self) -> &SimilarityIfs {
        &self.base
    }

    /// `max_{i≠j} λᵢ + λⱼ < 1`.
    pub fn satisfies_constraint(&self) -> bool {
        let mut r = self.base.ratios().to_vec();
        r.sort_by(|a, b| b.total_cmp(a));
        r[0] + r[1] < 1.0
    }

    /// Matrices `A_i(ω)` with `Π_t(ω) = Σᵢ A_i(ω) tᵢ`.
    pub fn coefficients(&self, w: &InfiniteWord) -> Result<Vec<DMatrix<f64>>> {
        let m = self.base.alphabet().size();
        let n = self.base.dim();
        if let Some(&s) = w.prefix.iter().chain(&w.period).find(|&&s| s as usize >= m) {
            return Err(Error::SymbolOutOfRange {
                symbol: s as usize,
                size: m,
            });
        }
        let map_linear = |i: usize| {
            let f = &self.base.maps()[i];
            DMatrix::from_row_slice(n, n, &f.orthogonal) * f.ratio
        };
        // (B_i(w), L_w) for a finite word
        let partial = |word: &[u8]| {
            let mut coeffs = vec![DMatrix::zeros(n, n); m];
            let mut lin = DMatrix::identity(n, n);
            for &s in word {
                coeffs[s as usize] += &lin;
                lin = &lin * map_linear(s as usize);
            }
            (coeffs, lin)
        };
        let (mut coeffs, l_u) = partial(&w.prefix);
        let (period, l_v) = partial(&w.period);
        let geometric = (DMatrix::identity(n, n) - l_v)
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("I − L_v is singular".into()))?;
        let tail = &l_u * geometric;
        for (c, p) in coeffs.iter_mut().zip(&period) {
            *c += &tail * p;
        }
        Ok(coeffs)
    }

    /// Estimate `η{t : |Π_t(ω) − Π_t(τ)| ≤ r}` on a grid of radii and fit
    /// its exponent.
    pub fn transversality_exponent(
        &self,
        omega: &InfiniteWord,
        tau: &InfiniteWord,
        settings: &TransversalitySettings,
    ) -> Result<TransversalityReport> {
        if omega.symbol(0) == tau.symbol(0) {
            return Err(Error::InvalidParameter(
                "ω and τ must differ in the first symbol".into(),
            ));
        }
        if settings.radii.is_empty()
            || settings.radii.windows(2).any(|w| !(w[0] > w[1]))
            || settings.radii[0] <= 0.0
        {
            return Err(Error::InvalidParameter(
                "radii must be positive and strictly decreasing".into(),
            ));
        }
        if settings.samples == 0 {
            return Err(Error::InvalidParameter(
                "need at least one parameter draw".into(),
            ));
        }
        let n = self.base.dim();
        let m = self.base.alphabet().size();
        let a = self.coefficients(omega)?;
        let b = self.coefficients(tau)?;
        let diff: Vec<DMatrix<f64>> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let scale = diff.iter().map(|d| d.amax()).fold(0.0, f64::max);
        let degenerate = scale <= 1e-14;
        let constraint_violated = !self.satisfies_constraint();
        let k = settings.radii.len();
        if degenerate {
            return Ok(TransversalityReport {
                radii: settings.radii.clone(),
                hits: vec![settings.samples as u64; k],
                measure: vec![1.0; k],
                used: vec![false; k],
                fit: None,
                k_hat: f64::INFINITY,
                degenerate,
                constraint_violated,
            });
        }
        let flat: Vec<Vec<f64>> = diff
            .iter()
            .map(|d| d.transpose().as_slice().to_vec())
            .collect();
        let radii = &settings.radii;
        let per_chunk = par::map_chunks(settings.samples, DRAW_CHUNK, |c, range| {
            let mut rng = par::stream_rng(settings.seed, c as u64);
            let mut hits = vec![0u64; k];
            let mut t = vec![0.0; m * n];
            let mut delta = vec![0.0; n];
            for _ in range {
                for i in 0..m {
                    for r in 0..n {
                        t[i * n + r] = rng.random_range(self.lower[i][r]..=self.upper[i][r]);
                    }
                }
                delta.iter_mut().for_each(|x| *x = 0.0);
                for i in 0..m {
                    for r in 0..n {
                        delta[r] += (0..n)
                            .map(|c| flat[i][r * n + c] * t[i * n + c])
                            .sum::<f64>();
                    }
                }
                let d = delta.iter().map(|x| x * x).sum::<f64>().sqrt();
                // radii decrease, so the hits form a prefix
                for (slot, &r) in hits.iter_mut().zip(radii) {
                    if d <= r {
                        *slot += 1;
                    } else {
                        break;
                    }
                }
            }
            hits
        });
        let mut hits = vec![0u64; k];
        for chunk in &per_chunk {
            for (h, c) in hits.iter_mut().zip(chunk) {
                *h += c;
            }
        }
        let total = settings.samples as f64;
        let measure: Vec<f64> = hits.iter().map(|&h| h as f64 / total).collect();
        let used: Vec<bool> = hits
            .iter()
            .map(|&h| h >= settings.min_hits && h < settings.samples as u64)
            .collect();
        let xs: Vec<f64> = radii
            .iter()
            .zip(&used)
            .filter(|(_, &u)| u)
            .map(|(r, _)| r.ln())
            .collect();
        let ys: Vec<f64> = measure
            .iter()
            .zip(&used)
            .filter(|(_, &u)| u)
            .map(|(p, _)| p.ln())
            .collect();
        let fit = if xs.len() >= 2 {
            ols(&xs, &ys).ok()
        } else {
            None
        };
        let d = n as i32;
        let k_hat = radii
            .iter()
            .zip(&measure)
            .zip(&hits)
            .filter(|(_, &h)| h >= settings.min_hits)
            .map(|((&r, &p), _)| p / r.powi(d).min(1.0))
            .fold(0.0, f64::max);
        Ok(TransversalityReport {
            radii: radii.clone(),
            hits,
            measure,
            used,
            fit,
            k_hat,
            degenerate,
            constraint_violated,
        })
    }
}

impl TransversalityReport {
    pub fn exponent(&self) -> Option<f64> {
        self.fit.as_ref().map(|f| f.slope)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cantor_family(ratio: f64) -> TranslationFamily {
        let base = SimilarityIfs::on_line(&[ratio, ratio], &[0.0, 1.0 - ratio]).unwrap();
        TranslationFamily::cube(base, 0.0, 1.0).unwrap()
    }

    #[test]
    fn coefficients_of_constant_words() {
        let fam = cantor_family(1.0 / 3.0);
        let zero = fam.coefficients(&InfiniteWord::constant(0)).unwrap();
        assert!((zero[0][(0, 0)] - 1.5).abs() < 1e-15);
        assert_eq!(zero[1][(0, 0)], 0.0);
        // Π_t(1·0^∞) = t_1 + t_0/3 · 3/2
        let w = InfiniteWord::new(vec![1], vec![0]).unwrap();
        let c = fam.coefficients(&w).unwrap();
        assert!((c[0][(0, 0)] - 0.5).abs() < 1e-15);
        assert!((c[1][(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn coefficients_match_natural_projection() {
        let base = SimilarityIfs::on_line(&[0.4, 0.3, 0.25], &[0.1, 0.5, 0.8]).unwrap();
        let t: Vec<f64> = base.maps().iter().map(|f| f.translation[0]).collect();
        let fam = TranslationFamily::cube(base.clone(), 0.0, 1.0).unwrap();
        let w = InfiniteWord::new(vec![2, 0, 1], vec![1, 2]).unwrap();
        let c = fam.coefficients(&w).unwrap();
        let linear: f64 = c.iter().zip(&t).map(|(m, ti)| m[(0, 0)] * ti).sum();
        let direct = base.project_infinite(&w, 1e-14).unwrap();
        assert!((linear - direct.point[0]).abs() < 1e-13);
    }

    #[test]
    fn affine_family_has_exponent_one() {
        let fam = cantor_family(1.0 / 3.0);
        let settings = TransversalitySettings {
            samples: 200_000,
            seed: 1,
            ..Default::default()
        };
        let report = fam
            .transversality_exponent(
                &InfiniteWord::constant(0),
                &InfiniteWord::constant(1),
                &settings,
            )
            .unwrap();
        let slope = report.exponent().unwrap();
        assert!((slope - 1.0).abs() < 0.05, "slope {slope}");
        assert!(!report.constraint_violated && !report.degenerate);
        assert!(report.k_hat.is_finite() && report.k_hat < 3.0);
    }

    #[test]
    fn saturated_bins_are_excluded() {
        let fam = cantor_family(1.0 / 3.0);
        let settings = TransversalitySettings {
            radii: vec![4.0, 2.0, 0.5, 0.25, 0.125],
            samples: 20_000,
            seed: 2,
            min_hits: 50,
        };
        let report = fam
            .transversality_exponent(
                &InfiniteWord::constant(0),
                &InfiniteWord::constant(1),
                &settings,
            )
            .unwrap();
        assert_eq!(report.measure[0], 1.0);
        assert!(!report.used[0] && !report.used[1]);
        assert!(report.used[2]);
    }

    #[test]
    fn flags_and_degeneracy() {
        let fam = cantor_family(0.6);
        let s = TransversalitySettings {
            samples: 10_000,
            ..Default::default()
        };
        let r = fam
            .transversality_exponent(
                &InfiniteWord::new(vec![0], vec![1]).unwrap(),
                &InfiniteWord::new(vec![1], vec![0]).unwrap(),
                &s,
            )
            .unwrap();
        assert!(r.constraint_violated);

        // ω = 0·1^∞ and τ = 1·0^∞ with λ = 1/2: Π_t agrees for every t
        let half = cantor_family(0.5);
        let r = half
            .transversality_exponent(
                &InfiniteWord::new(vec![0], vec![1]).unwrap(),
                &InfiniteWord::new(vec![1], vec![0]).unwrap(),
                &s,
            )
            .unwrap();
        assert!(r.degenerate && r.exponent().is_none());
        assert!(fam
            .transversality_exponent(&InfiniteWord::constant(0), &InfiniteWord::constant(0), &s)
            .is_err());
    }

    #[test]
    fn worker_count_does_not_change_hits() {
        let fam = cantor_family(0.3);
        let s = TransversalitySettings {
            samples: 100_000,
            seed: 9,
            ..Default::default()
        };
        let (w, t) = (
            InfiniteWord::new(vec![], vec![0, 1]).unwrap(),
            InfiniteWord::constant(1),
        );
        let a = fam.transversality_exponent(&w, &t, &s).unwrap();
        let b = par::sequential(|| fam.transversality_exponent(&w, &t, &s).unwrap());
        assert_eq!(a, b);
    }
}
