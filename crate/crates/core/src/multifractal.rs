//! The structure function `T(q)`, defined by `Σ pᵢ^q λᵢ^{T(q)} = 1`, its
//! Legendre transform and the Bernoulli measures realising each point of
//! the spectrum.
//!
//! Every power is taken in log-space, so large negative `q` cannot
//! overflow.

use serde::Serialize;

use crate::csv::Table;
use crate::error::{Error, Result};
use crate::ifs::similarity_dimension;
use crate::measures::markov::check_distribution;
use crate::measures::BernoulliMeasure;
use crate::row;

/// Residual target for the `T`-equation.
const T_RESIDUAL: f64 = 1e-13;
/// Per-coordinate tolerance for `pᵢ = λᵢ^{s₀}`.
const DEGENERATE_TOL: f64 = 1e-12;
/// Exponents this close to `α_min`/`α_max` are treated as the endpoint.
const ENDPOINT_TOL: f64 = 1e-12;
/// Tail extension of the q-grid stops once `α` moves less than this.
const TAIL_TOL: f64 = 1e-9;
const MAX_Q: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumProblem {
    p: Vec<f64>,
    ratios: Vec<f64>,
    s0: f64,
    degenerate: bool,
}

impl SpectrumProblem {
    pub fn new(p: Vec<f64>, ratios: Vec<f64>) -> Result<Self> {
        if p.len() != ratios.len() {
            return Err(Error::DimensionMismatch {
                expected: ratios.len(),
                found: p.len(),
            });
        }
        if p.len() < 2 {
            return Err(Error::AlphabetTooSmall(p.len()));
        }
        check_distribution(&p, "weight vector")?;
        for (index, &value) in ratios.iter().enumerate() {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::InvalidRatio { index, value });
            }
        }
        let s0 = similarity_dimension(&ratios);
        let degenerate = p
            .iter()
            .zip(&ratios)
            .all(|(pi, l)| (pi - l.powf(s0)).abs() <= DEGENERATE_TOL);
        Ok(Self {
            p,
            ratios,
            s0,
            degenerate,
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    /// Similarity dimension `T(0)`.
    pub fn s0(&self) -> f64 {
        self.s0
    }

    /// `pᵢ = λᵢ^{s₀}` for every `i`: the spectrum is a single point.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    fn support(&self, q: f64) -> Result<Vec<(f64, f64)>> {
        let has_zero = self.p.contains(&0.0);
        if has_zero && q <= 0.0 {
            return Err(Error::ZeroWeightNonPositiveQ { q });
        }
        Ok(self
            .p
            .iter()
            .zip(&self.ratios)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, l)| (p.ln(), l.ln()))
            .collect())
    }

    fn require_positive(&self) -> Result<()> {
        if self.p.contains(&0.0) {
            return Err(Error::InvalidProbability(
                "the spectrum needs strictly positive weights".into(),
            ));
        }
        Ok(())
    }

    /// Exponents `log pᵢ / log λᵢ`.
    pub fn exponents(&self) -> Vec<f64> {
        self.p
            .iter()
            .zip(&self.ratios)
            .map(|(p, l)| p.ln() / l.ln())
            .collect()
    }

    /// `T(q)`.
    pub fn solve_t(&self, q: f64) -> Result<f64> {
        if !q.is_finite() {
            return Err(Error::InvalidParameter("q must be finite".into()));
        }
        let terms = self.support(q)?;
        Ok(solve_on(&terms, q))
    }

    /// `T'(q)`, from the closed-form ratio at the solved `T(q)`.
    pub fn t_derivative(&self, q: f64) -> Result<f64> {
        let t = self.solve_t(q)?;
        let terms = self.support(q)?;
        Ok(-alpha_on(&terms, q, t))
    }

    /// `α(q) = −T'(q)`.
    pub fn alpha(&self, q: f64) -> Result<f64> {
        Ok(-self.t_derivative(q)?)
    }

    /// `[min log pᵢ/log λᵢ, max log pᵢ/log λᵢ]`.
    pub fn alpha_range(&self) -> Result<(f64, f64)> {
        self.require_positive()?;
        let e = self.exponents();
        Ok((
            e.iter().copied().fold(f64::INFINITY, f64::min),
            e.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ))
    }

    /// `T*(α) = inf_q (αq + T(q))`.
    pub fn legendre(&self, alpha: f64) -> Result<f64> {
        Ok(self.locate(alpha)?.value)
    }

    /// Bernoulli measure whose symbolic dimension is `T*(α)` and whose
    /// typical points have local exponent `α`.
    pub fn optimal_measure(&self, alpha: f64) -> Result<BernoulliMeasure> {
        let w = self.optimal_weights(alpha)?;
        let total: f64 = w.iter().sum();
        BernoulliMeasure::new(w.iter().map(|x| x / total).collect())
    }

    /// Weights `pᵢ^{q_α} λᵢ^{T(q_α)}` at interior `α`; at an endpoint,
    /// `λᵢ^c` on the extremal symbols where `Σ λᵢ^c = 1` over them. Returned
    /// unnormalised: they sum to one by construction.
    pub fn optimal_weights(&self, alpha: f64) -> Result<Vec<f64>> {
        let located = self.locate(alpha)?;
        Ok(match located.kind {
            Located::Interior { q, t } => self
                .p
                .iter()
                .zip(&self.ratios)
                .map(|(p, l)| (q * p.ln() + t * l.ln()).exp())
                .collect(),
            Located::Endpoint { ref symbols, c } => (0..self.p.len())
                .map(|i| {
                    if symbols.contains(&i) {
                        self.ratios[i].powf(c)
                    } else {
                        0.0
                    }
                })
                .collect(),
        })
    }

    /// `T*` at an endpoint: the similarity dimension of the maps whose
    /// exponent is extremal.
    fn endpoint(&self, alpha: f64) -> Option<Location> {
        let e = self.exponents();
        let symbols: Vec<usize> = (0..e.len())
            .filter(|&i| (e[i] - alpha).abs() <= ENDPOINT_TOL * alpha.abs().max(1.0))
            .collect();
        if symbols.is_empty() {
            return None;
        }
        let ratios: Vec<f64> = symbols.iter().map(|&i| self.ratios[i]).collect();
        let c = similarity_dimension(&ratios);
        Some(Location {
            value: c,
            kind: Located::Endpoint { symbols, c },
        })
    }

    fn locate(&self, alpha: f64) -> Result<Location> {
        let (lo, hi) = self.alpha_range()?;
        let slack = ENDPOINT_TOL * hi.abs().max(1.0);
        if !(alpha >= lo - slack && alpha <= hi + slack) {
            return Err(Error::AlphaOutOfRange { alpha, lo, hi });
        }
        if (alpha - lo).abs() <= slack || (alpha - hi).abs() <= slack {
            let at = if (alpha - lo).abs() <= (alpha - hi).abs() {
                lo
            } else {
                hi
            };
            return Ok(self.endpoint(at).expect("extremal symbol exists"));
        }
        let terms = self.support(0.0)?;
        let a = |q: f64| alpha_on(&terms, q, solve_on(&terms, q));
        // α(q) is non-increasing: bracket α(q_lo) ≥ α ≥ α(q_hi)
        let (mut q_lo, mut q_hi) = (-1.0, 1.0);
        while a(q_lo) < alpha {
            q_lo *= 2.0;
            if q_lo < -MAX_Q {
                return Ok(self.endpoint(hi).expect("extremal symbol exists"));
            }
        }
        while a(q_hi) > alpha {
            q_hi *= 2.0;
            if q_hi > MAX_Q {
                return Ok(self.endpoint(lo).expect("extremal symbol exists"));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (q_lo + q_hi);
            if mid <= q_lo || mid >= q_hi {
                break;
            }
            if a(mid) >= alpha {
                q_lo = mid;
            } else {
                q_hi = mid;
            }
        }
        let q = 0.5 * (q_lo + q_hi);
        let t = solve_on(&terms, q);
        Ok(Location {
            value: alpha * q + t,
            kind: Located::Interior { q, t },
        })
    }

    /// `(q, T, α, T*(α))` over `grid` plus the two endpoints; the tails are
    /// extended geometrically until `α` has settled.
    pub fn spectrum_curve(&self, grid: &QGrid) -> Result<SpectrumCurve> {
        self.require_positive()?;
        let alpha0 = self.alpha(0.0)?;
        if self.degenerate {
            return Ok(SpectrumCurve {
                points: vec![SpectrumPoint {
                    q: 0.0,
                    t: self.s0,
                    alpha: self.s0,
                    f: self.s0,
                    endpoint: true,
                }],
                alpha_min: self.s0,
                alpha_max: self.s0,
                alpha0,
                s0: self.s0,
                degenerate: true,
            });
        }
        let mut qs = grid.points()?;
        extend_tail(self, &mut qs, 1.0)?;
        qs.reverse();
        extend_tail(self, &mut qs, -1.0)?;
        qs.reverse();
        let (alpha_min, alpha_max) = self.alpha_range()?;
        let mut points = Vec::with_capacity(qs.len() + 2);
        points.push(SpectrumPoint {
            q: f64::NEG_INFINITY,
            t: f64::INFINITY,
            alpha: alpha_max,
            f: self.legendre(alpha_max)?,
            endpoint: true,
        });
        for q in qs {
            let t = self.solve_t(q)?;
            let alpha = self.alpha(q)?;
            points.push(SpectrumPoint {
                q,
                t,
                alpha,
                f: q * alpha + t,
                endpoint: false,
            });
        }
        points.push(SpectrumPoint {
            q: f64::INFINITY,
            t: f64::NEG_INFINITY,
            alpha: alpha_min,
            f: self.legendre(alpha_min)?,
            endpoint: true,
        });
        Ok(SpectrumCurve {
            points,
            alpha_min,
            alpha_max,
            alpha0,
            s0: self.s0,
            degenerate: false,
        })
    }
}

enum Located {
    Interior { q: f64, t: f64 },
    Endpoint { symbols: Vec<usize>, c: f64 },
}

struct Location {
    value: f64,
    kind: Located,
}

/// `log Σ exp(q log pᵢ + T log λᵢ)`, strictly decreasing in `T`.
fn log_sum(terms: &[(f64, f64)], q: f64, t: f64) -> f64 {
    let max = terms
        .iter()
        .map(|(lp, ll)| q * lp + t * ll)
        .fold(f64::NEG_INFINITY, f64::max);
    max + terms
        .iter()
        .map(|(lp, ll)| (q * lp + t * ll - max).exp())
        .sum::<f64>()
        .ln()
}

fn solve_on(terms: &[(f64, f64)], q: f64) -> f64 {
    let g = |t: f64| log_sum(terms, q, t);
    let (mut lo, mut hi) = (-1.0, 1.0);
    while g(lo) < 0.0 {
        lo *= 2.0;
    }
    while g(hi) > 0.0 {
        hi *= 2.0;
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = g(mid);
        if v.abs() <= T_RESIDUAL * 1e-3 {
            return mid;
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if g(lo).abs() < g(hi).abs() {
        lo
    } else {
        hi
    }
}

/// `Σ wᵢ log pᵢ / Σ wᵢ log λᵢ` with `wᵢ = pᵢ^q λᵢ^t`.
fn alpha_on(terms: &[(f64, f64)], q: f64, t: f64) -> f64 {
    let max = terms
        .iter()
        .map(|(lp, ll)| q * lp + t * ll)
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (lp, ll) in terms {
        let w = (q * lp + t * ll - max).exp();
        num += w * lp;
        den += w * ll;
    }
    num / den
}

/// Append points beyond the last grid point, in direction `dir`, doubling `|q|`,
/// until `α` changes by less than the tail tolerance.
fn extend_tail(problem: &SpectrumProblem, qs: &mut Vec<f64>, dir: f64) -> Result<()> {
    let last = |qs: &Vec<f64>| *qs.last().expect("grid is non-empty");
    if qs.len() < 2 {
        return Ok(());
    }
    let mut prev = problem.alpha(qs[qs.len() - 2])?;
    let mut cur = problem.alpha(last(qs))?;
    while (cur - prev).abs() >= TAIL_TOL {
        let q = last(qs);
        let next = if q * dir > 0.0 { 2.0 * q } else { q + dir };
        if next.abs() > MAX_Q {
            break;
        }
        qs.push(next);
        prev = cur;
        cur = problem.alpha(next)?;
    }
    Ok(())
}

/// Evenly spaced q values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for QGrid {
    fn default() -> Self {
        Self {
            lo: -20.0,
            hi: 20.0,
            step: 0.05,
        }
    }
}

impl QGrid {
    /// Grid points, computed as `lo + k·step` so no error accumulates.
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::InvalidParameter(
                "q-grid needs lo < hi and a positive step".into(),
            ));
        }
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        Ok((0..=n).map(|k| self.lo + k as f64 * self.step).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumPoint {
    pub q: f64,
    pub t: f64,
    pub alpha: f64,
    pub f: f64,
    /// Limit point at `q = ±∞`.
    pub endpoint: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumCurve {
    /// Ordered by increasing `q`, endpoints first and last.
    pub points: Vec<SpectrumPoint>,
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Position of the peak, `α(0)`.
    pub alpha0: f64,
    pub s0: f64,
    pub degenerate: bool,
}

impl SpectrumCurve {
    /// Range of `α` over which the level-set formula is established for
    /// projections into `ℝ^d`. In the line every exponent is covered; in
    /// higher dimension only the decreasing branch `α ≥ α(0)`.
    pub fn coverage(&self, ambient_dim: usize) -> (f64, f64) {
        if ambient_dim <= 1 {
            (self.alpha_min, self.alpha_max)
        } else {
            (self.alpha0, self.alpha_max)
        }
    }

    /// Columns `q,T,alpha,f,endpoint`.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["q", "T", "alpha", "f", "endpoint"]);
        for p in &self.points {
            t.push(row![p.q, p.t, p.alpha, p.f, p.endpoint])
                .expect("five columns");
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::SimilarityIfs;
    use proptest::prelude::*;

    fn problem(p: &[f64], l: &[f64]) -> SpectrumProblem {
        SpectrumProblem::new(p.to_vec(), l.to_vec()).unwrap()
    }

    fn skewed() -> SpectrumProblem {
        problem(&[0.25, 0.75], &[1.0 / 3.0, 1.0 / 3.0])
    }

    /// Brute-force `inf_q (αq + T(q))` on a grid with local refinement.
    fn grid_min(p: &SpectrumProblem, alpha: f64) -> f64 {
        let f = |q: f64| alpha * q + p.solve_t(q).unwrap();
        let mut best = (0.0, f(0.0));
        let mut step = 1e-2;
        for k in -6000..=6000 {
            let q = k as f64 * step;
            let v = f(q);
            if v < best.1 {
                best = (q, v);
            }
        }
        for _ in 0..40 {
            step *= 0.5;
            for q in [best.0 - step, best.0 + step] {
                let v = f(q);
                if v < best.1 {
                    best = (q, v);
                }
            }
        }
        best.1
    }

    #[test]
    fn t_of_fair_halves_is_linear() {
        let p = problem(&[0.5, 0.5], &[0.5, 0.5]);
        for q in [-2.0, 0.0, 1.0, 3.0] {
            assert!((p.solve_t(q).unwrap() - (1.0 - q)).abs() < 1e-12);
            assert!((p.t_derivative(q).unwrap() + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn t_for_equal_ratios_has_closed_form() {
        let p = skewed();
        for k in -50..=50 {
            let q = k as f64 / 10.0;
            let exact = (0.25f64.powf(q) + 0.75f64.powf(q)).ln() / 3f64.ln();
            assert!((p.solve_t(q).unwrap() - exact).abs() < 1e-12, "q = {q}");
        }
        assert!((p.solve_t(0.0).unwrap() - 0.630_929_753_571_457_4).abs() < 1e-12);
        assert!(p.solve_t(1.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn derivative_examples() {
        let p = skewed();
        let d0 = p.t_derivative(0.0).unwrap();
        let expected = -(0.25f64.ln() + 0.75f64.ln()) / (2.0 * (1.0f64 / 3.0).ln());
        assert!((d0 - expected).abs() < 1e-13);
        assert!((d0 + 0.761_859_507_142_914_8).abs() < 1e-13);
        let d1 = p.t_derivative(1.0).unwrap();
        let h = -(0.25 * 0.25f64.ln() + 0.75 * 0.75f64.ln());
        assert!((d1 + h / 3f64.ln()).abs() < 1e-13);
        for q in [-7.0, -1.5, 0.3, 2.0, 9.0] {
            let fd = (p.solve_t(q + 1e-6).unwrap() - p.solve_t(q - 1e-6).unwrap()) / 2e-6;
            let an = p.t_derivative(q).unwrap();
            assert!((fd - an).abs() <= 1e-6 * an.abs(), "q = {q}");
        }
    }

    #[test]
    fn zero_weights() {
        let p = problem(&[0.0, 1.0], &[0.5, 0.25]);
        assert!(matches!(
            p.solve_t(-1.0),
            Err(Error::ZeroWeightNonPositiveQ { .. })
        ));
        assert!(matches!(
            p.solve_t(0.0),
            Err(Error::ZeroWeightNonPositiveQ { .. })
        ));
        // only the second map carries mass: 1^q 4^{-T} = 1
        assert!(p.solve_t(2.0).unwrap().abs() < 1e-12);
        assert!(p.alpha_range().is_err());
    }

    #[test]
    fn alpha_range_examples() {
        let (lo, hi) = skewed().alpha_range().unwrap();
        assert!((lo - 0.261_859_507_142_914_7).abs() < 1e-12);
        assert!((hi - 1.261_859_507_142_914_9).abs() < 1e-12);
        let (lo, hi) = problem(&[0.5, 0.5], &[0.5, 0.5]).alpha_range().unwrap();
        assert!((lo - 1.0).abs() < 1e-15 && (hi - 1.0).abs() < 1e-15);
        let (lo, hi) = problem(&[0.5, 0.5], &[0.5, 0.25]).alpha_range().unwrap();
        assert!((lo - 0.5).abs() < 1e-15 && (hi - 1.0).abs() < 1e-15);
    }

    #[test]
    fn legendre_examples() {
        let p = skewed();
        let a0 = p.alpha(0.0).unwrap();
        assert!((p.legendre(a0).unwrap() - p.s0()).abs() < 1e-9);
        assert!((p.legendre(a0).unwrap() - grid_min(&p, a0)).abs() < 1e-6);
        let (lo, hi) = p.alpha_range().unwrap();
        assert_eq!(p.legendre(hi).unwrap(), 0.0);
        assert_eq!(p.legendre(lo).unwrap(), 0.0);
        assert!(matches!(
            p.legendre(hi + 0.01),
            Err(Error::AlphaOutOfRange { .. })
        ));
        let a1 = p.alpha(1.0).unwrap();
        assert!((p.legendre(a1).unwrap() - a1).abs() < 1e-9);
    }

    #[test]
    fn legendre_matches_grid_minimisation() {
        let p = problem(&[0.2, 0.5, 0.3], &[0.3, 0.25, 0.4]);
        let (lo, hi) = p.alpha_range().unwrap();
        for k in 1..20 {
            let a = lo + (hi - lo) * k as f64 / 20.0;
            assert!((p.legendre(a).unwrap() - grid_min(&p, a)).abs() < 1e-6);
        }
    }

    #[test]
    fn endpoint_with_several_extremal_maps() {
        // exponents 1, 1, 2: α_min is shared by two maps with ratios 1/2, 1/4
        let p = problem(&[0.5, 0.25, 0.25], &[0.5, 0.25, 0.5]);
        let (lo, _) = p.alpha_range().unwrap();
        let c = similarity_dimension(&[0.5, 0.25]);
        assert!((p.legendre(lo).unwrap() - c).abs() < 1e-14);
        // the limit from the interior agrees
        let near = p.alpha(60.0).unwrap();
        assert!((p.legendre(near).unwrap() - c).abs() < 1e-6);
        let w = p.optimal_weights(lo).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(w[2], 0.0);
    }

    #[test]
    fn optimal_measure_examples() {
        let p = skewed();
        let a1 = p.alpha(1.0).unwrap();
        let w = p.optimal_weights(a1).unwrap();
        assert!((w[0] - 0.25).abs() < 1e-9 && (w[1] - 0.75).abs() < 1e-9);
        let a0 = p.alpha(0.0).unwrap();
        let w = p.optimal_weights(a0).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-9 && (w[1] - 0.5).abs() < 1e-9);
        let (_, hi) = p.alpha_range().unwrap();
        assert_eq!(p.optimal_weights(hi).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn optimal_measure_has_the_predicted_dimension() {
        let p = problem(&[0.2, 0.5, 0.3], &[0.3, 0.25, 0.4]);
        let ifs = SimilarityIfs::on_line(p.ratios(), &[0.0, 0.35, 0.6]).unwrap();
        let (lo, hi) = p.alpha_range().unwrap();
        for k in 0..=20 {
            let a = lo + (hi - lo) * k as f64 / 20.0;
            let w = p.optimal_weights(a).unwrap();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let mu = p.optimal_measure(a).unwrap().into();
            let dim = ifs.symbolic_dimension(&mu).unwrap();
            assert!((dim - p.legendre(a).unwrap()).abs() < 1e-9, "α = {a}");
        }
    }

    #[test]
    fn degenerate_problems_collapse() {
        let p = problem(&[0.5, 0.5], &[0.5, 0.5]);
        assert!(p.is_degenerate());
        let c = p.spectrum_curve(&QGrid::default()).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.points.len(), 1);
        assert_eq!((c.points[0].alpha, c.points[0].f), (1.0, 1.0));
        let l = [0.5, 0.25];
        let s0 = similarity_dimension(&l);
        let p = problem(&[0.5f64.powf(s0), 1.0 - 0.5f64.powf(s0)], &l);
        assert!(p.is_degenerate());
        assert!(!skewed().is_degenerate());
    }

    #[test]
    fn spectrum_curve_shape() {
        let p = skewed();
        let c = p
            .spectrum_curve(&QGrid {
                lo: -20.0,
                hi: 20.0,
                step: 0.1,
            })
            .unwrap();
        assert!(!c.degenerate);
        let pts = &c.points;
        assert!(pts[0].endpoint && pts[pts.len() - 1].endpoint);
        assert_eq!(pts[0].alpha, c.alpha_max);
        let inner = &pts[1..pts.len() - 1];
        assert!(inner.windows(2).all(|w| w[1].t < w[0].t));
        assert!(pts.windows(2).all(|w| w[1].alpha <= w[0].alpha));
        assert!(pts.iter().all(|x| x.f >= -1e-12 && x.f <= p.s0() + 1e-12));
        let peak = inner.iter().map(|x| x.f).fold(f64::MIN, f64::max);
        assert!((peak - p.s0()).abs() < 1e-12);
        // tails were extended until α settled
        let n = inner.len();
        assert!((inner[n - 1].alpha - inner[n - 2].alpha).abs() < 1e-9);
        assert!((inner[0].alpha - inner[1].alpha).abs() < 1e-9);
        // concavity of f in α
        for w in inner.windows(3) {
            let (a, b, c) = (w[0], w[1], w[2]);
            if (a.alpha - c.alpha).abs() < 1e-9 {
                continue;
            }
            let chord = a.f + (c.f - a.f) * (b.alpha - a.alpha) / (c.alpha - a.alpha);
            assert!(b.f >= chord - 1e-9);
        }
        let csv = c.to_table().to_csv();
        assert!(csv.starts_with("q,T,alpha,f,endpoint\n"));
        let one = csv
            .lines()
            .find(|l| l.starts_with("1.0000000000000000e0,"))
            .unwrap();
        let t: f64 = one.split(',').nth(1).unwrap().parse().unwrap();
        assert!(t.abs() <= 1e-12);
        assert_eq!(c.coverage(1), (c.alpha_min, c.alpha_max));
        assert_eq!(c.coverage(2).0, c.alpha0);
    }

    #[test]
    fn grid_points_do_not_drift() {
        let g = QGrid::default().points().unwrap();
        assert_eq!(g.len(), 801);
        assert_eq!(g[400], 0.0);
        assert_eq!(g[420], 1.0);
        assert_eq!(*g.last().unwrap(), 20.0);
    }

    fn problems() -> impl Strategy<Value = SpectrumProblem> {
        (2usize..5)
            .prop_flat_map(|m| {
                (
                    prop::collection::vec(0.05f64..1.0, m),
                    prop::collection::vec(0.05f64..0.6, m),
                )
            })
            .prop_map(|(w, l)| {
                let s: f64 = w.iter().sum();
                SpectrumProblem::new(w.iter().map(|x| x / s).collect(), l).unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn t_identities(p in problems()) {
            prop_assert!(p.solve_t(1.0).unwrap().abs() <= 1e-12);
            prop_assert!((p.solve_t(0.0).unwrap() - p.s0()).abs() <= 1e-12);
        }

        #[test]
        fn t_is_convex_and_decreasing(p in problems()) {
            let h = 0.05;
            let qs: Vec<f64> = (-40..=40).map(|k| k as f64 * h).collect();
            let d: Vec<f64> = qs.iter().map(|&q| p.t_derivative(q).unwrap()).collect();
            prop_assert!(d.iter().all(|&x| x < 0.0));
            for w in d.windows(2) {
                prop_assert!((w[1] - w[0]) / h >= -1e-8);
            }
        }

        #[test]
        fn duality(p in problems(), q in -10.0f64..10.0) {
            prop_assume!(!p.is_degenerate());
            let a = p.alpha(q).unwrap();
            let t = p.solve_t(q).unwrap();
            prop_assert!((p.legendre(a).unwrap() - (q * a + t)).abs() < 1e-9);
        }

        #[test]
        fn tangency_at_one(p in problems()) {
            prop_assume!(!p.is_degenerate());
            let a = p.alpha(1.0).unwrap();
            prop_assert!((p.legendre(a).unwrap() - a).abs() < 1e-9);
        }

        #[test]
        fn weights_sum_to_one(p in problems(), u in 0.0f64..=1.0) {
            let (lo, hi) = p.alpha_range().unwrap();
            let w = p.optimal_weights(lo + u * (hi - lo)).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
