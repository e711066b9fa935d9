//! Similarity iterated function systems `fᵢ(x) = λᵢ Oᵢ x + tᵢ` on ℝⁿ.

mod transversality;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::Serialize;

pub use transversality::{TranslationFamily, TransversalityReport, TransversalitySettings};

use crate::dimest::PointCloud;
use crate::error::{Error, Result};
use crate::measures::Measure;
use crate::par;
use crate::symbolic::{AdaptedMetric, Alphabet, Word};

/// Tolerance on `‖OᵀO − I‖_max`.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;
const ROOT_WIDTH: f64 = 1e-15;
/// Points per independently seeded chunk in [`SimilarityIfs::sample_points`].
const POINT_CHUNK: usize = 4096;

/// One map `x ↦ λ O x + t`, with `O` row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityMap {
    pub ratio: f64,
    pub orthogonal: Vec<f64>,
    pub translation: Vec<f64>,
}

impl SimilarityMap {
    /// `x ↦ λx + t` with `O = I`.
    pub fn scaled(ratio: f64, translation: Vec<f64>) -> Self {
        let n = translation.len();
        let mut orthogonal = vec![0.0; n * n];
        for i in 0..n {
            orthogonal[i * n + i] = 1.0;
        }
        Self {
            ratio,
            orthogonal,
            translation,
        }
    }
}

/// An affine map `x ↦ L x + b` (row-major `L`).
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub linear: Vec<f64>,
    pub offset: Vec<f64>,
}

impl Affine {
    pub fn identity(n: usize) -> Self {
        let mut linear = vec![0.0; n * n];
        for i in 0..n {
            linear[i * n + i] = 1.0;
        }
        Self {
            linear,
            offset: vec![0.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|r| self.offset[r] + (0..n).map(|c| self.linear[r * n + c] * x[c]).sum::<f64>())
            .collect()
    }

    /// `self ∘ f`.
    pub fn then_map(&self, f: &SimilarityMap) -> Affine {
        let n = self.dim();
        let mut linear = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                linear[r * n + c] = f.ratio
                    * (0..n)
                        .map(|k| self.linear[r * n + k] * f.orthogonal[k * n + c])
                        .sum::<f64>();
            }
        }
        Affine {
            linear,
            offset: self.apply(&f.translation),
        }
    }
}

/// A similarity IFS together with a certified invariant ball.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityIfs {
    dim: usize,
    maps: Vec<SimilarityMap>,
    #[serde(skip)]
    metric: AdaptedMetric,
    center: Vec<f64>,
    radius: f64,
}

/// A cylinder image `f_ω(B)` of the invariant ball.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CylinderBall {
    pub word: Word,
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Point plus a certified bound on its distance to the true projection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Projected {
    pub point: Vec<f64>,
    pub error: f64,
    pub depth: usize,
}

/// An eventually periodic infinite word `prefix · period^∞`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InfiniteWord {
    pub prefix: Vec<u8>,
    pub period: Vec<u8>,
}

impl InfiniteWord {
    pub fn new(prefix: Vec<u8>, period: Vec<u8>) -> Result<Self> {
        if period.is_empty() {
            return Err(Error::InvalidParameter(
                "period of an infinite word must be non-empty".into(),
            ));
        }
        Ok(Self { prefix, period })
    }

    pub fn constant(symbol: u8) -> Self {
        Self {
            prefix: Vec::new(),
            period: vec![symbol],
        }
    }

    /// The `k`-th symbol (0-based).
    pub fn symbol(&self, k: usize) -> u8 {
        if k < self.prefix.len() {
            self.prefix[k]
        } else {
            self.period[(k - self.prefix.len()) % self.period.len()]
        }
    }

    /// The first `n` symbols.
    pub fn truncate(&self, n: usize) -> Vec<u8> {
        (0..n).map(|k| self.symbol(k)).collect()
    }

    fn max_symbol(&self) -> u8 {
        self.prefix
            .iter()
            .chain(&self.period)
            .copied()
            .max()
            .unwrap_or(0)
    }
}

impl SimilarityIfs {
    pub fn new(maps: Vec<SimilarityMap>) -> Result<Self> {
        let alphabet = Alphabet::new(maps.len())?;
        let dim = maps[0].translation.len();
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "ambient dimension must be positive".into(),
            ));
        }
        for (i, f) in maps.iter().enumerate() {
            if f.translation.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: f.translation.len(),
                });
            }
            if f.orthogonal.len() != dim * dim {
                return Err(Error::DimensionMismatch {
                    expected: dim * dim,
                    found: f.orthogonal.len(),
                });
            }
            if !(f.ratio > 0.0 && f.ratio < 1.0) {
                return Err(Error::InvalidRatio {
                    index: i,
                    value: f.ratio,
                });
            }
            if f.translation
                .iter()
                .chain(&f.orthogonal)
                .any(|x| !x.is_finite())
            {
                return Err(Error::InvalidParameter(format!(
                    "map {i} has non-finite entries"
                )));
            }
            let o = DMatrix::from_row_slice(dim, dim, &f.orthogonal);
            let residual = (o.transpose() * &o - DMatrix::identity(dim, dim)).amax();
            if residual > ORTHOGONALITY_TOL {
                return Err(Error::NotOrthogonal { index: i, residual });
            }
        }
        let metric = AdaptedMetric::new(maps.iter().map(|f| f.ratio).collect())?;
        debug_assert_eq!(metric.alphabet(), alphabet);

        let fixed: Vec<DVector<f64>> = maps
            .iter()
            .map(|f| {
                let o = DMatrix::from_row_slice(dim, dim, &f.orthogonal);
                let a = DMatrix::identity(dim, dim) - o * f.ratio;
                let t = DVector::from_column_slice(&f.translation);
                a.lu().solve(&t).expect("I − λO is invertible for λ < 1")
            })
            .collect();
        let center_v = fixed.iter().fold(DVector::zeros(dim), |acc, p| acc + p) / maps.len() as f64;
        let center: Vec<f64> = center_v.iter().copied().collect();
        let mut ifs = Self {
            dim,
            maps,
            metric,
            center,
            radius: 0.0,
        };
        // f_i(B(c,R)) = B(f_i(c), λ_i R) ⊂ B(c,R) iff |f_i(c) − c| ≤ (1 − λ_i) R
        let radius = (0..ifs.maps.len())
            .map(|i| {
                crate::dimest::cloud_dist(&ifs.apply(i, &ifs.center), &ifs.center)
                    / (1.0 - ifs.maps[i].ratio)
            })
            .fold(0.0, f64::max);
        // guard the containment against rounding in the check above
        ifs.radius = radius * (1.0 + 1e-12);
        Ok(ifs)
    }

    /// Maps `x ↦ λᵢ x + tᵢ` on the line.
    pub fn on_line(ratios: &[f64], translations: &[f64]) -> Result<Self> {
        if ratios.len() != translations.len() {
            return Err(Error::DimensionMismatch {
                expected: ratios.len(),
                found: translations.len(),
            });
        }
        Self::new(
            ratios
                .iter()
                .zip(translations)
                .map(|(&r, &t)| SimilarityMap::scaled(r, vec![t]))
                .collect(),
        )
    }

    /// The middle-thirds Cantor system `x/3`, `x/3 + 2/3`.
    pub fn cantor() -> Self {
        Self::on_line(&[1.0 / 3.0, 1.0 / 3.0], &[0.0, 2.0 / 3.0]).expect("valid system")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn maps(&self) -> &[SimilarityMap] {
        &self.maps
    }

    pub fn alphabet(&self) -> Alphabet {
        self.metric.alphabet()
    }

    pub fn ratios(&self) -> &[f64] {
        self.metric.ratios()
    }

    pub fn metric(&self) -> &AdaptedMetric {
        &self.metric
    }

    /// Centre of the invariant ball.
    pub fn center(&self) -> &[f64] {
        &self.center
    }

    /// Radius of the invariant ball.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// `fᵢ(x)`.
    pub fn apply(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.apply_into(i, x, &mut out);
        out
    }

    fn apply_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let f = &self.maps[i];
        let n = self.dim;
        for (r, slot) in out.iter_mut().enumerate() {
            let row = &f.orthogonal[r * n..(r + 1) * n];
            *slot = f.ratio * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + f.translation[r];
        }
    }

    /// `f_{ω₁} ∘ ⋯ ∘ f_{ωₙ}(x)`.
    pub fn compose_apply(&self, symbols: &[u8], x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let mut next = vec![0.0; self.dim];
        for &s in symbols.iter().rev() {
            self.apply_into(s as usize, &cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// The affine map `f_ω`.
    pub fn cylinder_map(&self, symbols: &[u8]) -> Affine {
        symbols.iter().fold(Affine::identity(self.dim), |acc, &s| {
            acc.then_map(&self.maps[s as usize])
        })
    }

    /// `f_ω(center)` with the certified error `ψ(ω)·R`.
    ///
    /// Fails with the required depth when `ψ(ω)·diam(B) > tol`.
    pub fn natural_projection(&self, w: &Word, tol: f64) -> Result<Projected> {
        self.check_word(w)?;
        let psi = self.metric.psi(w)?;
        if psi * 2.0 * self.radius > tol {
            let required = self.depth_for_tolerance(tol);
            return Err(Error::InsufficientDepth {
                required: required.max(w.len() + 1),
                actual: w.len(),
            });
        }
        Ok(Projected {
            point: self.compose_apply(w.symbols(), &self.center),
            error: psi * self.radius,
            depth: w.len(),
        })
    }

    /// Projection of an eventually periodic word, truncated at the first
    /// depth meeting `tol`.
    pub fn project_infinite(&self, w: &InfiniteWord, tol: f64) -> Result<Projected> {
        if w.max_symbol() as usize >= self.alphabet().size() {
            return Err(Error::SymbolOutOfRange {
                symbol: w.max_symbol() as usize,
                size: self.alphabet().size(),
            });
        }
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter("tolerance must be positive".into()));
        }
        let diam = 2.0 * self.radius;
        let mut psi = 1.0;
        let mut n = 0;
        while psi * diam > tol {
            psi *= self.ratios()[w.symbol(n) as usize];
            n += 1;
        }
        let word = Word::new(self.alphabet(), w.truncate(n))?;
        self.natural_projection(&word, tol)
    }

    /// Smallest depth at which every cylinder has `ψ·diam(B) ≤ tol`.
    pub fn depth_for_tolerance(&self, tol: f64) -> usize {
        let diam = 2.0 * self.radius;
        if diam <= tol {
            return 0;
        }
        ((tol / diam).ln() / self.metric.gamma().ln())
            .ceil()
            .max(0.0) as usize
    }

    /// `P(s) = log Σ λᵢˢ`.
    pub fn pressure(&self, s: f64) -> f64 {
        pressure(self.ratios(), s)
    }

    /// Root of `P(s) = 0`.
    pub fn similarity_dimension(&self) -> f64 {
        similarity_dimension(self.ratios())
    }

    /// `χ(μ) = −Σᵢ μ[i] log λᵢ`.
    pub fn lyapunov_exponent(&self, mu: &Measure) -> Result<f64> {
        self.check_measure(mu)?;
        let marginal = mu.block_masses(1);
        Ok(-marginal
            .iter()
            .zip(self.ratios())
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, l)| p * l.ln())
            .sum::<f64>())
    }

    /// `h(μ)/χ(μ)`.
    pub fn symbolic_dimension(&self, mu: &Measure) -> Result<f64> {
        Ok(mu.entropy() / self.lyapunov_exponent(mu)?)
    }

    /// `min(d, h/χ)`, the dimension expected of a generic projection to
    /// a `d`-dimensional subspace.
    pub fn predicted_projection_dimension(&self, mu: &Measure, d: usize) -> Result<f64> {
        Ok(self.symbolic_dimension(mu)?.min(d as f64))
    }

    /// `f_ω(B)` for every word of length `depth`.
    pub fn cylinder_balls(&self, depth: usize) -> Result<Vec<CylinderBall>> {
        let m = self.alphabet().size();
        let budget = crate::budget();
        let needed = (m as u128).checked_pow(depth as u32).unwrap_or(u128::MAX);
        if needed > budget as u128 {
            return Err(Error::BudgetExceeded { needed, budget });
        }
        let mut level = vec![(Vec::<u8>::new(), Affine::identity(self.dim), 1.0)];
        for _ in 0..depth {
            level = level
                .into_iter()
                .flat_map(|(w, map, psi)| {
                    (0..m).map(move |i| {
                        let mut w2 = w.clone();
                        w2.push(i as u8);
                        (w2, map.then_map(&self.maps[i]), psi * self.maps[i].ratio)
                    })
                })
                .collect();
        }
        level
            .into_iter()
            .map(|(w, map, psi)| {
                Ok(CylinderBall {
                    word: Word::new(self.alphabet(), w)?,
                    center: map.apply(&self.center),
                    radius: psi * self.radius,
                })
            })
            .collect()
    }

    /// `n` points distributed as `Π μ` up to `tol`, deterministic in `seed`
    /// for every worker count.
    pub fn sample_points(&self, mu: &Measure, n: usize, tol: f64, seed: u64) -> Result<PointCloud> {
        self.check_measure(mu)?;
        if n == 0 {
            return Err(Error::InvalidParameter("need at least one point".into()));
        }
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter("tolerance must be positive".into()));
        }
        let depth = self.depth_for_tolerance(tol).max(1);
        let sampler = SymbolSampler::new(mu)?;
        let chunks = par::map_chunks(n, POINT_CHUNK, |c, range| {
            let mut rng = par::stream_rng(seed, c as u64);
            let mut word = vec![0u8; depth];
            let mut coords = Vec::with_capacity(range.len() * self.dim);
            for _ in range {
                sampler.fill(&mut rng, &mut word);
                coords.extend(self.compose_apply(&word, &self.center));
            }
            coords
        });
        let error = self.metric.gamma().powi(depth as i32) * self.radius;
        Ok(PointCloud::new(self.dim, chunks.concat())?.with_resolution(error))
    }

    fn check_word(&self, w: &Word) -> Result<()> {
        if w.alphabet() != self.alphabet() {
            return Err(Error::AlphabetMismatch {
                left: self.alphabet().size(),
                right: w.alphabet().size(),
            });
        }
        Ok(())
    }

    fn check_measure(&self, mu: &Measure) -> Result<()> {
        if mu.alphabet() != self.alphabet() {
            return Err(Error::AlphabetMismatch {
                left: self.alphabet().size(),
                right: mu.alphabet().size(),
            });
        }
        Ok(())
    }
}

/// Draws fixed-length words from a measure.
struct SymbolSampler {
    m: usize,
    order: usize,
    start: WeightedIndex<f64>,
    rows: Vec<Option<WeightedIndex<f64>>>,
}

impl SymbolSampler {
    fn new(mu: &Measure) -> Result<Self> {
        let markov = mu.as_markov();
        let m = markov.alphabet().size();
        let start = WeightedIndex::new(markov.stationary())
            .map_err(|e| Error::InvalidProbability(e.to_string()))?;
        let rows = (0..markov.state_count())
            .map(|s| WeightedIndex::new(&markov.kernel()[s * m..(s + 1) * m]).ok())
            .collect();
        Ok(Self {
            m,
            order: markov.order(),
            start,
            rows,
        })
    }

    fn fill(&self, rng: &mut rand_chacha::ChaCha8Rng, word: &mut [u8]) {
        let states = self.rows.len();
        let mut state = self.start.sample(rng);
        let mut x = state;
        for k in (0..self.order.min(word.len())).rev() {
            word[k] = (x % self.m) as u8;
            x /= self.m;
        }
        for k in self.order..word.len() {
            let a = self.rows[state]
                .as_ref()
                .expect("positive-mass state")
                .sample(rng);
            word[k] = a as u8;
            state = (state * self.m + a) % states;
        }
    }
}

/// `log Σ λᵢˢ`.
pub fn pressure(ratios: &[f64], s: f64) -> f64 {
    ratios.iter().map(|l| l.powf(s)).sum::<f64>().ln()
}

/// Unique root of `Σ λᵢˢ = 1`, by bisection.
pub fn similarity_dimension(ratios: &[f64]) -> f64 {
    let gamma = ratios.iter().copied().fold(0.0, f64::max);
    let mut lo = 0.0;
    // Σ λᵢˢ ≤ m γˢ = 1 at s = log m / −log γ
    let mut hi = (ratios.len() as f64).ln() / -gamma.ln();
    while pressure(ratios, hi) > 0.0 {
        hi *= 2.0;
    }
    while hi - lo > ROOT_WIDTH {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pressure(ratios, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // pick the endpoint with the smaller residual
    if pressure(ratios, lo).abs() < pressure(ratios, hi).abs() {
        lo
    } else {
        hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::BernoulliMeasure;
    use proptest::prelude::*;

    fn bern(p: &[f64]) -> Measure {
        BernoulliMeasure::new(p.to_vec()).unwrap().into()
    }

    fn word(a: Alphabet, s: &[u8]) -> Word {
        Word::new(a, s.to_vec()).unwrap()
    }

    #[test]
    fn bounding_ball_of_cantor() {
        let f = SimilarityIfs::cantor();
        assert!((f.center()[0] - 0.5).abs() < 1e-15);
        assert!((f.radius() - 0.5).abs() < 1e-11);
    }

    #[test]
    fn natural_projection_examples() {
        let f = SimilarityIfs::cantor();
        let a = f.alphabet();
        let p = f.natural_projection(&word(a, &[0; 40]), 1e-12).unwrap();
        assert!(p.point[0].abs() <= 1e-12 && p.error <= 1e-12);
        let alt = InfiniteWord::new(vec![], vec![1, 0]).unwrap();
        let p = f.project_infinite(&alt, 1e-13).unwrap();
        assert!((p.point[0] - 0.75).abs() < 1e-13);
        let p = f
            .project_infinite(&InfiniteWord::new(vec![1], vec![0]).unwrap(), 1e-13)
            .unwrap();
        assert!((p.point[0] - 2.0 / 3.0).abs() < 1e-13);
        let short = f.natural_projection(&word(a, &[0; 5]), 1e-12);
        assert!(
            matches!(short, Err(Error::InsufficientDepth { required, actual: 5 }) if required >= 25)
        );
    }

    #[test]
    fn pressure_examples() {
        let half = SimilarityIfs::on_line(&[0.5, 0.5], &[0.0, 0.5]).unwrap();
        assert!(half.pressure(1.0).abs() < 1e-15);
        let c = SimilarityIfs::cantor();
        assert!((c.pressure(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((c.pressure(1.0) - (2.0f64 / 3.0).ln()).abs() < 1e-15);
        assert!((c.pressure(1.0) + 0.4054651).abs() < 1e-7);
    }

    #[test]
    fn similarity_dimension_examples() {
        assert!((similarity_dimension(&[0.5, 0.5]) - 1.0).abs() < 1e-14);
        let s = similarity_dimension(&[1.0 / 3.0, 1.0 / 3.0]);
        assert!((s - 2f64.ln() / 3f64.ln()).abs() < 1e-14);
        let s = similarity_dimension(&[0.5, 0.25, 0.25]);
        assert!((s - 1.0).abs() < 1e-14);
        assert!(pressure(&[0.5, 0.25, 0.25], s).abs() < 1e-13);
    }

    #[test]
    fn lyapunov_and_symbolic_dimension_examples() {
        let c = SimilarityIfs::cantor();
        assert!((c.lyapunov_exponent(&bern(&[0.5, 0.5])).unwrap() - 3f64.ln()).abs() < 1e-15);
        let f = SimilarityIfs::on_line(&[0.5, 0.25], &[0.0, 0.75]).unwrap();
        let chi = f.lyapunov_exponent(&bern(&[0.25, 0.75])).unwrap();
        assert!((chi - (0.25 * 2f64.ln() + 0.75 * 4f64.ln())).abs() < 1e-15);
        assert!((chi - 1.2130076).abs() < 1e-7);
        assert!((f.lyapunov_exponent(&bern(&[1.0, 0.0])).unwrap() - 2f64.ln()).abs() < 1e-15);

        let s = c.symbolic_dimension(&bern(&[0.5, 0.5])).unwrap();
        assert!((s - 2f64.ln() / 3f64.ln()).abs() < 1e-15);
        let s = c.symbolic_dimension(&bern(&[0.25, 0.75])).unwrap();
        let expected = (0.25 * 4f64.ln() + 0.75 * (4.0f64 / 3.0).ln()) / 3f64.ln();
        assert!((s - expected).abs() < 1e-15);
        assert!((s - 0.511_859_507_142_914_7).abs() < 1e-14);
        assert_eq!(c.symbolic_dimension(&bern(&[1.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn symbolic_equals_similarity_dimension_when_uniform() {
        for m in 2..6 {
            let ratios = vec![0.9 / m as f64; m];
            let f = SimilarityIfs::on_line(&ratios, &(0..m).map(|i| i as f64).collect::<Vec<_>>())
                .unwrap();
            let sym = f
                .symbolic_dimension(&BernoulliMeasure::uniform(m).unwrap().into())
                .unwrap();
            assert!((sym - f.similarity_dimension()).abs() < 1e-13);
        }
    }

    #[test]
    fn cylinder_ball_examples() {
        let c = SimilarityIfs::cantor();
        let root = c.cylinder_balls(0).unwrap();
        assert_eq!(root.len(), 1);
        let one = c.cylinder_balls(1).unwrap();
        assert!((one[0].center[0] - 1.0 / 6.0).abs() < 1e-15);
        assert!((one[1].center[0] - 5.0 / 6.0).abs() < 1e-15);
        assert!((one[0].radius - 1.0 / 6.0).abs() < 1e-11);
        let two = c.cylinder_balls(2).unwrap();
        assert_eq!(two.len(), 4);
        assert!(two.iter().all(|b| (b.radius - 1.0 / 18.0).abs() < 1e-11));
    }

    #[test]
    fn cylinder_balls_nest() {
        let rot = |a: f64| vec![a.cos(), -a.sin(), a.sin(), a.cos()];
        let f = SimilarityIfs::new(vec![
            SimilarityMap {
                ratio: 0.45,
                orthogonal: rot(0.3),
                translation: vec![0.0, 0.0],
            },
            SimilarityMap {
                ratio: 0.3,
                orthogonal: rot(-1.1),
                translation: vec![1.0, 0.2],
            },
            SimilarityMap {
                ratio: 0.25,
                orthogonal: rot(2.0),
                translation: vec![0.3, 1.0],
            },
        ])
        .unwrap();
        let mut parents = f.cylinder_balls(0).unwrap();
        for depth in 1..=8 {
            let children = f.cylinder_balls(depth).unwrap();
            for (idx, child) in children.iter().enumerate() {
                let parent = &parents[idx / 3];
                let gap = crate::dimest::cloud_dist(&child.center, &parent.center);
                assert!(gap + child.radius <= parent.radius * (1.0 + 1e-9));
            }
            parents = children;
        }
    }

    #[test]
    fn projection_error_is_certified() {
        let f = SimilarityIfs::on_line(&[0.4, 0.35, 0.3], &[0.0, 0.5, 0.9]).unwrap();
        let omega = InfiniteWord::new(vec![2, 0, 1, 1], vec![0, 2, 1]).unwrap();
        let a = f.project_infinite(&omega, 1e-4).unwrap();
        let b = f.project_infinite(&omega, 1e-12).unwrap();
        assert!((a.point[0] - b.point[0]).abs() <= a.error + b.error);
    }

    #[test]
    fn orthogonality_is_validated() {
        let bad = SimilarityMap {
            ratio: 0.5,
            orthogonal: vec![1.0, 0.1, 0.0, 1.0],
            translation: vec![0.0, 0.0],
        };
        let good = SimilarityMap::scaled(0.5, vec![1.0, 0.0]);
        assert!(matches!(
            SimilarityIfs::new(vec![bad, good]),
            Err(Error::NotOrthogonal { index: 0, .. })
        ));
        assert!(matches!(
            SimilarityIfs::on_line(&[1.0, 0.5], &[0.0, 1.0]),
            Err(Error::InvalidRatio { index: 0, .. })
        ));
    }

    #[test]
    fn sampled_points_respect_geometry() {
        let c = SimilarityIfs::cantor();
        let tol = 1e-10;
        let cloud = c.sample_points(&bern(&[0.5, 0.5]), 1000, tol, 3).unwrap();
        for p in cloud.points() {
            assert!(p[0] >= -tol && p[0] <= 1.0 + tol);
            assert!(!(p[0] > 1.0 / 3.0 + tol && p[0] < 2.0 / 3.0 - tol));
        }
        let fixed = c.sample_points(&bern(&[1.0, 0.0]), 10, tol, 3).unwrap();
        assert!(fixed.points().all(|p| p[0].abs() <= tol));

        let corners = [
            [0.0, 0.0],
            [2.0 / 3.0, 0.0],
            [0.0, 2.0 / 3.0],
            [2.0 / 3.0, 2.0 / 3.0],
        ];
        let dust = SimilarityIfs::new(
            corners
                .iter()
                .map(|t| SimilarityMap::scaled(1.0 / 3.0, t.to_vec()))
                .collect(),
        )
        .unwrap();
        let cloud = dust
            .sample_points(&BernoulliMeasure::uniform(4).unwrap().into(), 1000, tol, 4)
            .unwrap();
        for p in cloud.points() {
            for &x in p {
                assert!(x >= -tol && x <= 1.0 + tol);
                assert!(!(x > 1.0 / 3.0 + tol && x < 2.0 / 3.0 - tol));
            }
        }
    }

    #[test]
    fn sampling_is_worker_independent() {
        let f = SimilarityIfs::on_line(&[0.4, 0.35, 0.3], &[0.0, 0.5, 0.9]).unwrap();
        let mu = bern(&[0.2, 0.5, 0.3]);
        let a = f.sample_points(&mu, 20_000, 1e-9, 8).unwrap();
        let b = par::sequential(|| f.sample_points(&mu, 20_000, 1e-9, 8).unwrap());
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn bowen_root_is_accurate_and_monotone(
            ratios in prop::collection::vec(0.01f64..0.95, 2..6),
            bump in 0.001f64..0.04,
            which in 0usize..6,
        ) {
            let s = similarity_dimension(&ratios);
            prop_assert!(pressure(&ratios, s).abs() <= 1e-13);
            let mut bigger = ratios.clone();
            let i = which % ratios.len();
            bigger[i] = (bigger[i] + bump).min(0.99);
            prop_assume!(bigger[i] > ratios[i]);
            prop_assert!(similarity_dimension(&bigger) > s);
        }
    }
}
