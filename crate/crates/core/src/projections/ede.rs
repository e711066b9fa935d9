//! Separation of a point from the other cylinders of its level, and the
//! matching Hölder-inverse bound for the natural projection.
//!
//! Cylinders `Π([w])` are enclosed by the balls `f_w(B)`. Distances from a
//! point to a union of cylinders are bounded below by branch and bound: the
//! frontier node with the smallest bound is refined until its ball is small
//! compared with that bound, so the reported number never exceeds the true
//! distance. Truncation errors are subtracted from distances and added to
//! diameters.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::ops::RangeInclusive;

use serde::Serialize;

use crate::csv::Table;
use crate::dimest::cloud_dist as dist;
use crate::error::{Error, Result};
use crate::ifs::{Affine, InfiniteWord, SimilarityIfs};
use crate::measures::Measure;
use crate::{par, row};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdeSettings {
    /// Truncation tolerance for projected points.
    pub tol: f64,
    /// Refine a frontier ball until its radius is at most this fraction of
    /// its distance bound.
    pub refine: f64,
    /// Use this constant instead of fitting one at the coarsest depth.
    pub constant: Option<f64>,
}

impl Default for EdeSettings {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            refine: 1e-6,
            constant: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdeRow {
    pub depth: usize,
    /// Certified lower bound on the distance to the other cylinders.
    pub dist_lower: f64,
    /// Upper bound on the diameter of the point's own cylinder.
    pub diam: f64,
    pub epsilon: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdeReport {
    pub rows: Vec<EdeRow>,
    pub constant: f64,
    /// `max log(dist)/log(diam)`; infinite once a distance collapses.
    pub worst_exponent: f64,
    /// Depths whose distance bound fell to the truncation error.
    pub collapsed: usize,
    /// The bound collapsed at every depth: evidence, not proof, of a point
    /// with two addresses.
    pub overlap_suspected: bool,
    /// Refinement budget ran out; `rows` stops at the last finished depth.
    pub budget_exhausted: bool,
}

impl EdeReport {
    pub fn all_pass(&self) -> bool {
        !self.budget_exhausted && self.rows.iter().all(|r| r.pass)
    }

    /// Columns `depth,dist_lower,diam,epsilon,pass`.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["depth", "dist_lower", "diam", "epsilon", "pass"]);
        for r in &self.rows {
            t.push(row![r.depth, r.dist_lower, r.diam, r.epsilon, r.pass])
                .expect("five columns");
        }
        t
    }
}

/// A cylinder on the branch-and-bound frontier.
struct Node {
    bound: f64,
    map: Affine,
    psi: f64,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // min-heap on the bound
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound)
    }
}

/// Counts refinement steps against the crate budget.
struct Budget {
    left: usize,
}

impl Budget {
    fn take(&mut self) -> bool {
        if self.left == 0 {
            return false;
        }
        self.left -= 1;
        true
    }
}

fn ball_gap(ifs: &SimilarityIfs, x: &[f64], map: &Affine, psi: f64) -> f64 {
    dist(x, &map.apply(ifs.center())) - psi * ifs.radius()
}

/// Lower bound on `dist(x, ⋃ frontier)`; `None` when the budget runs out.
fn point_distance(
    ifs: &SimilarityIfs,
    x: &[f64],
    mut heap: BinaryHeap<Node>,
    settings: &EdeSettings,
    budget: &mut Budget,
) -> Option<f64> {
    let m = ifs.alphabet().size();
    while let Some(node) = heap.pop() {
        let radius = node.psi * ifs.radius();
        if radius <= settings.refine * node.bound.max(0.0) + settings.tol {
            return Some(node.bound);
        }
        if !budget.take() {
            return None;
        }
        for i in 0..m {
            let map = node.map.then_map(&ifs.maps()[i]);
            let psi = node.psi * ifs.ratios()[i];
            let bound = ball_gap(ifs, x, &map, psi).max(node.bound);
            heap.push(Node { bound, map, psi });
        }
    }
    Some(f64::INFINITY)
}

/// Lower bound on the distance between `Π([u])` and `Π([v])`.
fn set_distance(
    ifs: &SimilarityIfs,
    u: &[u8],
    v: &[u8],
    settings: &EdeSettings,
    budget: &mut Budget,
) -> Option<f64> {
    struct Pair {
        bound: f64,
        a: (Affine, f64),
        b: (Affine, f64),
    }
    let r = ifs.radius();
    let c = ifs.center();
    let gap = |a: &(Affine, f64), b: &(Affine, f64)| {
        dist(&a.0.apply(c), &b.0.apply(c)) - (a.1 + b.1) * r
    };
    let psi = |w: &[u8]| w.iter().map(|&s| ifs.ratios()[s as usize]).product::<f64>();
    let a = (ifs.cylinder_map(u), psi(u));
    let b = (ifs.cylinder_map(v), psi(v));
    let mut frontier = vec![Pair {
        bound: gap(&a, &b),
        a,
        b,
    }];
    loop {
        let (k, _) = frontier
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.bound.total_cmp(&y.1.bound))?;
        let pair = frontier.swap_remove(k);
        let big = pair.a.1.max(pair.b.1) * r;
        if big <= settings.refine * pair.bound.max(0.0) + settings.tol {
            return Some(pair.bound);
        }
        if !budget.take() {
            return None;
        }
        let split_a = pair.a.1 >= pair.b.1;
        let (split, keep) = if split_a {
            (&pair.a, &pair.b)
        } else {
            (&pair.b, &pair.a)
        };
        for i in 0..ifs.alphabet().size() {
            let child = (split.0.then_map(&ifs.maps()[i]), split.1 * ifs.ratios()[i]);
            let bound = gap(&child, keep).max(pair.bound);
            let (a, b) = if split_a {
                (child, keep.clone())
            } else {
                (keep.clone(), child)
            };
            frontier.push(Pair { bound, a, b });
        }
    }
}

/// The largest `C` with `dist(Π[u], Π[v]) ≥ C·diam(Π[u])^{1+ε}` for all
/// distinct words `u`, `v` of length `depth`, using certified distance
/// lower bounds. Zero when some cylinders touch or overlap.
pub fn gap_constant(ifs: &SimilarityIfs, depth: usize, eps: f64, settings: &EdeSettings) -> Result<f64> {
    let m = ifs.alphabet().size();
    let budget_total = crate::budget();
    let words = (m as u128).checked_pow(depth as u32).unwrap_or(u128::MAX);
    let pairs = words.saturating_mul(words);
    if pairs > budget_total as u128 {
        return Err(Error::BudgetExceeded {
            needed: pairs,
            budget: budget_total,
        });
    }
    let words: Vec<Vec<u8>> = (0..words as usize)
        .map(|k| {
            let mut w = vec![0u8; depth];
            let mut k = k;
            for slot in w.iter_mut().rev() {
                *slot = (k % m) as u8;
                k /= m;
            }
            w
        })
        .collect();
    let mut budget = Budget { left: budget_total };
    let diam = |w: &[u8]| {
        w.iter().map(|&s| ifs.ratios()[s as usize]).product::<f64>() * 2.0 * ifs.radius()
    };
    let mut best = f64::INFINITY;
    for (i, u) in words.iter().enumerate() {
        for v in &words[i + 1..] {
            let d = set_distance(ifs, u, v, settings, &mut budget).ok_or(Error::BudgetExceeded {
                needed: budget_total as u128 + 1,
                budget: budget_total,
            })?;
            let d = (d - settings.tol).max(0.0);
            let worst_diam = diam(u).max(diam(v));
            best = best.min(d / worst_diam.powf(1.0 + eps));
        }
    }
    Ok(best)
}

/// Check `dist(Π(ω), ⋃_{|τ|=n, τ≠ω|n} Π([τ])) > C·diam(Π([ω|n]))^{1+ε}` for
/// each depth in `depths`.
///
/// Without an explicit constant, `C` is fitted once at the coarsest depth
/// from the separation of all cylinders of that level and then frozen. When
/// those cylinders touch, `C` falls back to half the point's own
/// separation ratio at the coarsest depth.
pub fn ede_check(
    ifs: &SimilarityIfs,
    omega: &InfiniteWord,
    depths: RangeInclusive<usize>,
    eps: f64,
    settings: &EdeSettings,
) -> Result<EdeReport> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParameter("ε must be nonnegative".into()));
    }
    if depths.is_empty() || *depths.start() == 0 {
        return Err(Error::InvalidParameter("depths must be a non-empty range ≥ 1".into()));
    }
    if !(settings.tol > 0.0) || !(settings.refine > 0.0) {
        return Err(Error::InvalidParameter(
            "tolerance and refinement ratio must be positive".into(),
        ));
    }
    let x = ifs.project_infinite(omega, settings.tol)?;
    let m = ifs.alphabet().size();
    let mut budget = Budget {
        left: crate::budget(),
    };
    let mut rows = Vec::new();
    let mut budget_exhausted = false;
    let mut prefix_maps = vec![(Affine::identity(ifs.dim()), 1.0)];
    for k in 0..*depths.end() {
        let (map, psi) = &prefix_maps[k];
        let s = omega.symbol(k) as usize;
        prefix_maps.push((map.then_map(&ifs.maps()[s]), psi * ifs.ratios()[s]));
    }
    for n in depths.clone() {
        // siblings of every prefix of ω|n
        let mut heap = BinaryHeap::new();
        for k in 0..n {
            let (map, psi) = &prefix_maps[k];
            for i in (0..m).filter(|&i| i != omega.symbol(k) as usize) {
                let child = map.then_map(&ifs.maps()[i]);
                let child_psi = psi * ifs.ratios()[i];
                heap.push(Node {
                    bound: ball_gap(ifs, &x.point, &child, child_psi),
                    map: child,
                    psi: child_psi,
                });
            }
        }
        let Some(bound) = point_distance(ifs, &x.point, heap, settings, &mut budget) else {
            budget_exhausted = true;
            break;
        };
        rows.push(EdeRow {
            depth: n,
            dist_lower: (bound - x.error).max(0.0),
            diam: prefix_maps[n].1 * 2.0 * ifs.radius() + 2.0 * x.error,
            epsilon: eps,
            pass: false,
        });
    }
    let constant = match settings.constant {
        Some(c) => c,
        None => {
            let c = gap_constant(ifs, *depths.start(), eps, settings)?;
            if c > 0.0 {
                c
            } else {
                rows.first()
                    .map(|r| 0.5 * r.dist_lower / r.diam.powf(1.0 + eps))
                    .unwrap_or(0.0)
            }
        }
    };
    let floor = 2.0 * settings.tol;
    let mut collapsed = 0;
    let mut worst_exponent = f64::NEG_INFINITY;
    for r in &mut rows {
        r.pass = r.dist_lower > floor && r.dist_lower > constant * r.diam.powf(1.0 + eps);
        if r.dist_lower <= floor {
            collapsed += 1;
            worst_exponent = f64::INFINITY;
        } else if r.diam < 1.0 {
            worst_exponent = worst_exponent.max(r.dist_lower.ln() / r.diam.ln());
        }
    }
    Ok(EdeReport {
        overlap_suspected: !rows.is_empty() && collapsed == rows.len(),
        rows,
        constant,
        worst_exponent,
        collapsed,
        budget_exhausted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderSettings {
    pub base_points: usize,
    /// Partners branch off the base word at every depth below this.
    pub depth: usize,
    pub tol: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderAlpha {
    pub alpha: f64,
    /// `max ρ/|Δ|^α` over base points and partners branching at depth `k`.
    pub per_depth: Vec<f64>,
    /// Running maximum of `per_depth`.
    pub running: Vec<f64>,
    /// Worst constant of each base point.
    pub constants: Vec<f64>,
    /// 50, 90 and 100 % quantiles of `constants`.
    pub quantiles: [f64; 3],
    /// The running maximum stopped growing over the second half of the
    /// depths.
    pub stabilized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderReport {
    pub alphas: Vec<HolderAlpha>,
    /// Pairs skipped because the projections coincide within the truncation
    /// error, cumulative over depth.
    pub skipped: Vec<u64>,
    pub pairs: u64,
}

impl HolderReport {
    /// Bounded, stabilising constants and no coincident pairs.
    pub fn passes(&self) -> bool {
        self.skipped.last().copied().unwrap_or(0) == 0 && self.alphas.iter().all(|a| a.stabilized)
    }

    /// Columns `alpha,depth,worst,running,skipped`.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["alpha", "depth", "worst", "running", "skipped"]);
        for a in &self.alphas {
            for (k, (w, r)) in a.per_depth.iter().zip(&a.running).enumerate() {
                t.push(row![a.alpha, k, *w, *r, self.skipped[k]])
                    .expect("five columns");
            }
        }
        t
    }
}

/// Relative growth of the running maximum allowed in the second half of
/// the depths.
const STABLE_GROWTH: f64 = 1e-2;

/// Base points sampled from `μ`; see [`holder_inverse_at`].
pub fn holder_inverse_check(
    ifs: &SimilarityIfs,
    mu: &Measure,
    alphas: &[f64],
    settings: &HolderSettings,
) -> Result<HolderReport> {
    if settings.base_points == 0 {
        return Err(Error::InvalidParameter("need at least one base point".into()));
    }
    let len = settings.depth + ifs.depth_for_tolerance(settings.tol) + 1;
    let seed = par::derive_seed(settings.seed, 0x484f_4c44);
    let bases = (0..settings.base_points)
        .map(|i| {
            let w = mu.sample_word(len, par::derive_seed(seed, i as u64))?;
            InfiniteWord::new(w.symbols().to_vec(), vec![0])
        })
        .collect::<Result<Vec<_>>>()?;
    holder_inverse_at(ifs, &bases, alphas, settings)
}

/// Empirical `C(ω, α) = max_τ ρ(ω, τ)/|Π(ω) − Π(τ)|^α` over adversarial
/// partners: at each depth `k` and each symbol `a ≠ ω_{k+1}`, the partner
/// starts with `ω|k a` and then greedily follows the child cylinder
/// closest to `Π(ω)`.
pub fn holder_inverse_at(
    ifs: &SimilarityIfs,
    bases: &[InfiniteWord],
    alphas: &[f64],
    settings: &HolderSettings,
) -> Result<HolderReport> {
    if let Some(&a) = alphas.iter().find(|&&a| !(a > 0.0 && a < 1.0)) {
        return Err(Error::InvalidParameter(format!(
            "Hölder exponent must lie in (0, 1), got {a}"
        )));
    }
    if bases.is_empty() || settings.depth == 0 {
        return Err(Error::InvalidParameter(
            "need base points and a positive depth".into(),
        ));
    }
    if !(settings.tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let m = ifs.alphabet().size();
    let depth = settings.depth;
    // per base: (ρ, Δ) for every partner, grouped by depth
    let per_base = par::map_indexed(bases.len(), |b| -> Result<Vec<Vec<(f64, f64)>>> {
        let omega = &bases[b];
        let x = ifs.project_infinite(omega, settings.tol)?;
        let mut out = vec![Vec::new(); depth];
        let mut prefix = Affine::identity(ifs.dim());
        let mut rho = 1.0;
        for (k, slot) in out.iter_mut().enumerate() {
            let own = omega.symbol(k) as usize;
            for a in (0..m).filter(|&a| a != own) {
                let mut map = prefix.then_map(&ifs.maps()[a]);
                let mut psi = rho * ifs.ratios()[a];
                while psi * 2.0 * ifs.radius() > settings.tol {
                    let (best, _) = (0..m)
                        .map(|i| {
                            let child = map.then_map(&ifs.maps()[i]);
                            let d = dist(&child.apply(ifs.center()), &x.point);
                            (i, d)
                        })
                        .min_by(|p, q| p.1.total_cmp(&q.1))
                        .expect("non-empty alphabet");
                    map = map.then_map(&ifs.maps()[best]);
                    psi *= ifs.ratios()[best];
                }
                let y = map.apply(ifs.center());
                let error = x.error + psi * ifs.radius();
                let delta = dist(&x.point, &y);
                slot.push((rho, if delta <= 2.0 * error { 0.0 } else { delta }));
            }
            prefix = prefix.then_map(&ifs.maps()[own]);
            rho *= ifs.ratios()[own];
        }
        Ok(out)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut skipped = vec![0u64; depth];
    let mut pairs = 0u64;
    for base in &per_base {
        for (k, partners) in base.iter().enumerate() {
            pairs += partners.len() as u64;
            skipped[k] += partners.iter().filter(|p| p.1 == 0.0).count() as u64;
        }
    }
    for k in 1..depth {
        skipped[k] += skipped[k - 1];
    }
    let alphas = alphas
        .iter()
        .map(|&alpha| {
            let ratio = |&(rho, delta): &(f64, f64)| {
                if delta > 0.0 {
                    rho / delta.powf(alpha)
                } else {
                    0.0
                }
            };
            let per_depth: Vec<f64> = (0..depth)
                .map(|k| {
                    per_base
                        .iter()
                        .flat_map(|b| b[k].iter().map(ratio))
                        .fold(0.0, f64::max)
                })
                .collect();
            let running: Vec<f64> = per_depth
                .iter()
                .scan(0.0f64, |acc, &x| {
                    *acc = acc.max(x);
                    Some(*acc)
                })
                .collect();
            let constants: Vec<f64> = per_base
                .iter()
                .map(|b| b.iter().flatten().map(ratio).fold(0.0, f64::max))
                .collect();
            let half = running[(depth - 1) / 2];
            let stabilized = running[depth - 1] <= half * (1.0 + STABLE_GROWTH);
            let mut sorted = constants.clone();
            sorted.sort_by(f64::total_cmp);
            let q = |p: f64| sorted[((sorted.len() - 1) as f64 * p).round() as usize];
            let quantiles = [q(0.5), q(0.9), q(1.0)];
            HolderAlpha {
                alpha,
                per_depth,
                running,
                constants,
                quantiles,
                stabilized,
            }
        })
        .collect();
    Ok(HolderReport {
        alphas,
        skipped,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::BernoulliMeasure;

    fn overlap() -> SimilarityIfs {
        SimilarityIfs::on_line(&[0.5, 0.5], &[0.0, 0.5]).unwrap()
    }

    fn random_words(m: usize, count: usize, seed: u64) -> Vec<InfiniteWord> {
        let mu: Measure = BernoulliMeasure::uniform(m).unwrap().into();
        (0..count)
            .map(|i| {
                let w = mu.sample_word(60, par::derive_seed(seed, i as u64)).unwrap();
                InfiniteWord::new(w.symbols().to_vec(), vec![0]).unwrap()
            })
            .collect()
    }

    #[test]
    fn cantor_first_level() {
        let c = SimilarityIfs::cantor();
        let r = ede_check(
            &c,
            &InfiniteWord::constant(0),
            1..=1,
            0.0,
            &EdeSettings::default(),
        )
        .unwrap();
        let row = r.rows[0];
        assert!((row.dist_lower - 2.0 / 3.0).abs() < 1e-9);
        assert!((row.diam - 1.0 / 3.0).abs() < 1e-9);
        assert!((row.dist_lower / row.diam - 2.0).abs() < 1e-8);
        assert!(row.pass);
        assert!((gap_constant(&c, 1, 0.0, &EdeSettings::default()).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn distance_bound_is_tight_and_certified() {
        // x = Π(0 1 0 0 …) = 2/9 lies in [0 1 0] = [2/9, 7/27]; the nearest
        // other depth-3 cylinder is [0 1 1] = [8/27, 1/3]
        let c = SimilarityIfs::cantor();
        let w = InfiniteWord::new(vec![0, 1, 0], vec![0]).unwrap();
        let r = ede_check(&c, &w, 3..=3, 0.0, &EdeSettings::default()).unwrap();
        let d = r.rows[0].dist_lower;
        let exact = 2.0 / 27.0;
        assert!(d <= exact + 1e-15 && d > exact * (1.0 - 2e-6), "{d}");
    }

    #[test]
    fn separated_system_passes_deep() {
        let c = SimilarityIfs::cantor();
        for w in random_words(2, 20, 1) {
            let r = ede_check(&c, &w, 1..=20, 0.1, &EdeSettings::default()).unwrap();
            assert!(r.all_pass(), "{r:?}");
            assert!(!r.overlap_suspected);
            assert!(r.worst_exponent < 1.1);
        }
    }

    #[test]
    fn exact_overlap_collapses() {
        let f = overlap();
        let w = InfiniteWord::new(vec![0], vec![1]).unwrap();
        let r = ede_check(&f, &w, 1..=20, 0.1, &EdeSettings::default()).unwrap();
        assert!(r.rows.iter().all(|row| !row.pass && row.dist_lower <= 2e-12));
        assert!(r.overlap_suspected);
        assert_eq!(r.worst_exponent, f64::INFINITY);
        let csv = r.to_table().to_csv();
        assert!(csv.starts_with("depth,dist_lower,diam,epsilon,pass\n"));
        assert_eq!(csv.lines().count(), 21);
    }

    #[test]
    fn verdicts_are_monotone_in_epsilon() {
        let c = SimilarityIfs::cantor();
        for w in random_words(2, 10, 2) {
            let r = ede_check(&c, &w, 1..=12, 0.0, &EdeSettings::default()).unwrap();
            for eps in [0.05, 0.2, 1.0] {
                let s = EdeSettings {
                    constant: Some(r.constant),
                    ..EdeSettings::default()
                };
                let r2 = ede_check(&c, &w, 1..=12, eps, &s).unwrap();
                for (a, b) in r.rows.iter().zip(&r2.rows) {
                    assert!(!a.pass || b.pass);
                }
            }
        }
    }

    #[test]
    fn holder_constants_stabilise_when_separated() {
        let c = SimilarityIfs::cantor();
        let mu: Measure = BernoulliMeasure::uniform(2).unwrap().into();
        let settings = HolderSettings {
            base_points: 50,
            depth: 20,
            tol: 1e-12,
            seed: 3,
        };
        let r = holder_inverse_check(&c, &mu, &[0.5, 0.9], &settings).unwrap();
        assert!(r.passes(), "{r:?}");
        // ρ ≤ 3^{-k}, |Δ| ≥ 3^{-k-1}: C ≤ 3^{α}
        for a in &r.alphas {
            assert!(a.quantiles[2] <= 3f64.powf(a.alpha) * (1.0 + 1e-9));
        }
        assert!(holder_inverse_check(&c, &mu, &[0.0], &settings).is_err());
        assert!(holder_inverse_check(&c, &mu, &[1.0], &settings).is_err());
    }

    #[test]
    fn holder_and_ede_agree_on_overlap() {
        let f = overlap();
        let w = InfiniteWord::new(vec![0], vec![1]).unwrap();
        let settings = HolderSettings {
            base_points: 1,
            depth: 20,
            tol: 1e-12,
            seed: 0,
        };
        let r = holder_inverse_at(&f, &[w], &[0.5, 0.8], &settings).unwrap();
        assert!(!r.passes());
        assert!(r.skipped[19] >= 1);
        assert!(r.skipped.windows(2).all(|s| s[0] <= s[1]));
    }
}
