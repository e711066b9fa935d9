//! Pair statistics: correlation sums and s-energies.
//!
//! Pairs are either all `N(N−1)/2` of them or, above the pair budget, a
//! stratified deterministic sample: pair `k` has first index `k mod N` and a
//! partner drawn from the counter-keyed stream of its chunk. Per-chunk
//! partial sums are combined in chunk order, so results do not depend on
//! the number of workers.

use rand::Rng;
use serde::Serialize;

use super::cloud::{dist, PointCloud};
use super::{ols, Fit, RadiusSchedule};
use crate::error::{Error, Result};
use crate::par;

const PAIR_CHUNK: u64 = 1 << 16;
/// Fewest close pairs a window radius may hold.
const MIN_PAIR_HITS: u64 = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSettings {
    pub max_pairs: u64,
    pub seed: u64,
}

impl Default for PairSettings {
    fn default() -> Self {
        Self {
            max_pairs: 10_000_000,
            seed: 0,
        }
    }
}

struct PairPlan {
    n: usize,
    total: u64,
    sampled: bool,
    seed: u64,
}

impl PairPlan {
    fn new(n: usize, settings: &PairSettings) -> Result<Self> {
        if n < 2 {
            return Err(Error::InsufficientData(
                "pair statistics need at least two points".into(),
            ));
        }
        if settings.max_pairs == 0 {
            return Err(Error::InvalidParameter(
                "pair budget must be positive".into(),
            ));
        }
        let all = n as u64 * (n as u64 - 1) / 2;
        Ok(Self {
            n,
            total: all.min(settings.max_pairs),
            sampled: all > settings.max_pairs,
            seed: par::derive_seed(settings.seed, 0x5041_4952),
        })
    }

    fn chunks(&self) -> usize {
        self.total.div_ceil(PAIR_CHUNK) as usize
    }

    /// Row of pair `k` in the row-major upper triangle.
    fn row_of(&self, k: u64) -> usize {
        let n = self.n as u64;
        let offset = |i: u64| i * (2 * n - i - 1) / 2;
        let (mut lo, mut hi) = (0u64, n - 1);
        while lo + 1 < hi {
            let mid = (lo + hi) / 2;
            if offset(mid) <= k {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo as usize
    }

    fn for_each(&self, chunk: usize, mut f: impl FnMut(usize, usize)) {
        let start = chunk as u64 * PAIR_CHUNK;
        let end = (start + PAIR_CHUNK).min(self.total);
        if self.sampled {
            let mut rng = par::stream_rng(self.seed, chunk as u64);
            for k in start..end {
                let i = (k % self.n as u64) as usize;
                let mut j = rng.random_range(0..self.n - 1);
                if j >= i {
                    j += 1;
                }
                f(i, j);
            }
        } else {
            let n = self.n as u64;
            let mut i = self.row_of(start);
            let row_start = i as u64 * (2 * n - i as u64 - 1) / 2;
            let mut j = i + 1 + (start - row_start) as usize;
            for _ in start..end {
                if j >= self.n {
                    i += 1;
                    j = i + 1;
                }
                f(i, j);
                j += 1;
            }
        }
    }
}

fn pair_weight(cloud: &PointCloud, i: usize, j: usize) -> f64 {
    match cloud.weights() {
        Some(w) => w[i] * w[j],
        None => 1.0,
    }
}

/// Correlation sums `C(r)` for decreasing radii, with the number of pairs
/// counted within each radius.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationSum {
    pub radii: Vec<f64>,
    pub sums: Vec<f64>,
    pub hits: Vec<u64>,
    pub pairs: u64,
    pub sampled: bool,
}

pub fn correlation_sum(
    cloud: &PointCloud,
    radii: &[f64],
    settings: &PairSettings,
) -> Result<CorrelationSum> {
    if radii.is_empty() || radii.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::InvalidParameter(
            "radii must be strictly decreasing".into(),
        ));
    }
    let plan = PairPlan::new(cloud.len(), settings)?;
    let k = radii.len();
    let partial = par::map_indexed(plan.chunks(), |c| {
        let mut hits = vec![0u64; k];
        let mut mass = vec![0.0; k];
        let mut total = 0.0;
        plan.for_each(c, |i, j| {
            let d = dist(cloud.point(i), cloud.point(j));
            let w = pair_weight(cloud, i, j);
            total += w;
            for (slot, &r) in radii.iter().enumerate() {
                if d > r {
                    break;
                }
                hits[slot] += 1;
                mass[slot] += w;
            }
        });
        (hits, mass, total)
    });
    let mut hits = vec![0u64; k];
    let mut mass = vec![0.0; k];
    let mut total = 0.0;
    for (h, m, t) in &partial {
        for s in 0..k {
            hits[s] += h[s];
            mass[s] += m[s];
        }
        total += t;
    }
    Ok(CorrelationSum {
        radii: radii.to_vec(),
        sums: mass.iter().map(|m| m / total).collect(),
        hits,
        pairs: plan.total,
        sampled: plan.sampled,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Correlation {
    pub fit: Fit,
    pub sum: CorrelationSum,
}

/// Slope of `log C(r)` against `log r` over the schedule's window.
pub fn correlation_dimension(
    cloud: &PointCloud,
    schedule: &RadiusSchedule,
    settings: &PairSettings,
) -> Result<Correlation> {
    schedule.check_resolution(cloud)?;
    let radii = schedule.window_radii();
    let sum = correlation_sum(cloud, &radii, settings)?;
    if let Some(j) = sum.hits.iter().position(|&h| h < MIN_PAIR_HITS) {
        return Err(Error::InsufficientData(format!(
            "only {} pairs within r = {}",
            sum.hits[j], radii[j]
        )));
    }
    let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = sum.sums.iter().map(|c| c.ln()).collect();
    Ok(Correlation {
        fit: ols(&xs, &ys)?,
        sum,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Energy {
    pub s: f64,
    /// Mean of `|x−y|^{−s}` over the non-coincident pairs of the cloud.
    pub value: f64,
    /// The same mean over the first 1/8, 1/4, 1/2 and all of the points.
    pub prefix_means: Vec<f64>,
    /// Prefix means with the [`ENERGY_TRIM`] closest pairs of each prefix
    /// set aside; these drive the divergence flag.
    pub stable_means: Vec<f64>,
    /// Some doubling of the prefix moved the stable mean by more than 10 %.
    pub divergent: bool,
    /// Pairs closer than this were enumerated exhaustively; the rest were
    /// sampled. Zero when no exhaustive part was used.
    pub cutoff: f64,
    pub near_pairs: u64,
    /// Leading points used; fewer than the cloud when more of it would
    /// resolve pairs below the truncation floor.
    pub points: usize,
    pub zero_pairs: u64,
    /// Pairs evaluated, exhaustive and sampled together.
    pub pairs: u64,
}

/// Relative change per doubling above which the energy is declared
/// divergent.
pub const ENERGY_STABILITY_TOL: f64 = 0.1;

/// Closest pairs of each prefix left out of the stability comparison. A
/// single near-coincident pair can move a finite heavy-tailed mean by more
/// than the tolerance; a divergent energy keeps growing without them.
pub const ENERGY_TRIM: usize = 32;

const PREFIXES: [usize; 4] = [8, 4, 2, 1];
const POINT_CHUNK: usize = 1 << 14;

/// Per-prefix-class sums; class `c` holds pairs whose later point first
/// enters prefix `c`.
#[derive(Clone, Default)]
struct ClassSums {
    sum: f64,
    weight: f64,
    zeros: u64,
    zero_weight: f64,
    count: u64,
    /// Largest `(term, weight)` seen, at most `2·ENERGY_TRIM` after pruning.
    top: Vec<(f64, f64)>,
}

impl ClassSums {
    fn push_top(&mut self, h: f64, w: f64) {
        self.top.push((h, w));
        if self.top.len() >= 4 * ENERGY_TRIM {
            prune_top(&mut self.top);
        }
    }
}

fn prune_top(top: &mut Vec<(f64, f64)>) {
    top.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    top.truncate(ENERGY_TRIM);
}

fn energy_term(d: f64, s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else {
        d.powf(-s)
    }
}

/// Largest prefix of the cloud holding at most [`ENERGY_TRIM`] pairs closer
/// than ten times its resolution. Such pairs measure the truncation of the
/// sample rather than the measure.
fn resolved_prefix(cloud: &PointCloud) -> Result<usize> {
    let n = cloud.len();
    let floor = 10.0 * cloud.resolution();
    if !(floor > 0.0) || cloud.dim() > super::grid::MAX_GRID_DIM {
        return Ok(n);
    }
    let grid = super::grid::GridIndex::build(cloud, floor)?;
    let mut seen = 0usize;
    let mut start = 0;
    while start < n {
        let end = (start + POINT_CHUNK).min(n);
        let counts = par::map_indexed(end - start, |k| {
            let j = start + k;
            let mut c = 0usize;
            grid.visit(cloud.point(j), |i, d| {
                if i < j && d < floor {
                    c += 1;
                }
            });
            c
        });
        for (k, c) in counts.into_iter().enumerate() {
            seen += c;
            if seen > ENERGY_TRIM {
                return Ok(start + k);
            }
        }
        start = end;
    }
    Ok(n)
}

/// Distance below which roughly `target` of the cloud's pairs fall,
/// estimated from a sampled pilot. `None` when close pairs cannot be
/// enumerated cheaply.
fn near_cutoff(cloud: &PointCloud, n: usize, target: u64, seed: u64) -> Option<f64> {
    let points = n;
    let n = n as u64;
    let all = n * (n - 1) / 2;
    if cloud.dim() > super::grid::MAX_GRID_DIM || target >= all {
        return None;
    }
    let q = target as f64 / all as f64;
    let pilot = ((64.0 / q).ceil() as u64).clamp(1 << 16, target.max(1 << 16));
    let plan = PairPlan::new(
        points,
        &PairSettings {
            max_pairs: pilot,
            seed,
        },
    )
    .ok()?;
    let mut ds: Vec<f64> = par::map_indexed(plan.chunks(), |c| {
        let mut out = Vec::new();
        plan.for_each(c, |i, j| out.push(dist(cloud.point(i), cloud.point(j))));
        out
    })
    .concat();
    let zeros = ds.iter().filter(|&&d| d == 0.0).count();
    if zeros as f64 > q * ds.len() as f64 {
        // Coincident pairs alone would exceed the enumeration budget.
        return None;
    }
    ds.retain(|&d| d > 0.0);
    let k = (q * plan.total as f64) as usize;
    if ds.is_empty() || k == 0 {
        return None;
    }
    let k = k.min(ds.len() - 1);
    let (_, &mut d, _) = ds.select_nth_unstable_by(k, f64::total_cmp);
    Some(d)
}

/// Empirical `s`-energy `∫∫ |x−y|^{−s}` with a stability diagnostic.
///
/// Pairs closer than a cutoff, chosen so that about `max_pairs` of them
/// exist, are enumerated exhaustively through a grid; farther pairs, whose
/// terms are bounded, are sampled with a budget of `max_pairs` per prefix.
/// The mean is formed over the prefixes of 1/8, 1/4, 1/2 and all points,
/// and the energy is declared divergent when one doubling moves the
/// trimmed mean by more than [`ENERGY_STABILITY_TOL`]. For clouds with a
/// positive resolution only the leading points that do not resolve the
/// truncation floor are used.
pub fn empirical_energy(cloud: &PointCloud, s: f64, settings: &PairSettings) -> Result<Energy> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::InvalidParameter(
            "energy exponent must be nonnegative".into(),
        ));
    }
    PairPlan::new(cloud.len(), settings)?;
    let n = resolved_prefix(cloud)?;
    if n < cloud.len() && n < 2 * PREFIXES[0] {
        return Err(Error::InsufficientData(format!(
            "only {n} points lie above the resolution floor"
        )));
    }
    let bounds: Vec<usize> = PREFIXES.iter().map(|&div| (n / div).max(2)).collect();
    let class_of = |j: usize| bounds.iter().position(|&m| j < m).expect("j < n");
    let all_pairs = n as u64 * (n as u64 - 1) / 2;
    let exhaustive = all_pairs <= settings.max_pairs;
    let cutoff = if exhaustive {
        None
    } else {
        near_cutoff(
            cloud,
            n,
            settings.max_pairs,
            par::derive_seed(settings.seed, 0x4E45_4152),
        )
    };

    // Exhaustive part: every pair when the budget allows, otherwise every
    // pair closer than the cutoff.
    let near_chunks: Vec<Vec<ClassSums>> = if exhaustive || cutoff.is_some() {
        let grid = match cutoff {
            Some(delta) => Some(super::grid::GridIndex::build(cloud, delta)?),
            None => None,
        };
        par::map_chunks(n, POINT_CHUNK, |_, range| {
            let mut classes = vec![ClassSums::default(); bounds.len()];
            let mut visit = |i: usize, j: usize, d: f64| {
                let w = pair_weight(cloud, i, j);
                let c = &mut classes[class_of(j)];
                c.count += 1;
                if d == 0.0 {
                    c.zeros += 1;
                    c.zero_weight += w;
                    return;
                }
                let h = energy_term(d, s);
                c.sum += w * h;
                c.weight += w;
                c.push_top(h, w);
            };
            for i in range {
                let x = cloud.point(i);
                match (&grid, cutoff) {
                    (Some(g), Some(delta)) => {
                        let mut hits: Vec<(usize, f64)> = Vec::new();
                        g.visit(x, |j, d| {
                            if j > i && j < n && d < delta {
                                hits.push((j, d));
                            }
                        });
                        hits.sort_unstable_by_key(|&(j, _)| j);
                        for (j, d) in hits {
                            visit(i, j, d);
                        }
                    }
                    _ => {
                        for j in i + 1..n {
                            visit(i, j, dist(x, cloud.point(j)));
                        }
                    }
                }
            }
            for c in &mut classes {
                prune_top(&mut c.top);
            }
            classes
        })
    } else {
        Vec::new()
    };

    let delta = if exhaustive {
        f64::INFINITY
    } else {
        cutoff.unwrap_or(0.0)
    };
    let mut prefix_means = Vec::with_capacity(bounds.len());
    let mut stable_means = Vec::with_capacity(bounds.len());
    let mut acc = ClassSums::default();
    let mut near_pairs = 0u64;
    let mut sampled_pairs = 0u64;
    let mut sampled_zeros = 0u64;
    for (k, &m) in bounds.iter().enumerate() {
        for chunk in &near_chunks {
            let c = &chunk[k];
            acc.sum += c.sum;
            acc.weight += c.weight;
            acc.zeros += c.zeros;
            acc.zero_weight += c.zero_weight;
            acc.count += c.count;
            acc.top.extend_from_slice(&c.top);
        }
        prune_top(&mut acc.top);
        near_pairs = acc.count;
        let total_weight = prefix_pair_weight(cloud, m);

        // Sampled part over the pairs of this prefix at or beyond the cutoff.
        let (mut far_mean, mut far_zero_share) = (0.0, 0.0);
        if !exhaustive {
            let plan = PairPlan::new(
                m,
                &PairSettings {
                    max_pairs: settings.max_pairs,
                    seed: par::derive_seed(settings.seed, k as u64 + 1),
                },
            )?;
            let partial = par::map_indexed(plan.chunks(), |c| {
                let (mut sum, mut weight, mut all, mut zeros) = (0.0, 0.0, 0.0, 0.0);
                plan.for_each(c, |i, j| {
                    let w = pair_weight(cloud, i, j);
                    all += w;
                    let d = dist(cloud.point(i), cloud.point(j));
                    if d < delta || (delta == 0.0 && d == 0.0) {
                        if d == 0.0 && delta == 0.0 {
                            zeros += w;
                        }
                        return;
                    }
                    sum += w * energy_term(d, s);
                    weight += w;
                });
                (sum, weight, all, zeros)
            });
            let (mut sum, mut weight, mut all, mut zeros) = (0.0, 0.0, 0.0, 0.0);
            for p in &partial {
                sum += p.0;
                weight += p.1;
                all += p.2;
                zeros += p.3;
            }
            far_mean = if weight > 0.0 { sum / weight } else { 0.0 };
            far_zero_share = if all > 0.0 { zeros / all } else { 0.0 };
            sampled_pairs += plan.total;
            if delta == 0.0 && k + 1 == bounds.len() {
                sampled_zeros = (far_zero_share * plan.total as f64).round() as u64;
            }
        }
        let zero_weight = acc.zero_weight + far_zero_share * total_weight;
        let far_weight = (total_weight - acc.weight - zero_weight).max(0.0);
        let nonzero = total_weight - zero_weight;
        let full = acc.sum + far_mean * far_weight;
        let (trim_sum, trim_weight) = acc
            .top
            .iter()
            .fold((0.0, 0.0), |(a, b), &(h, w)| (a + h * w, b + w));
        let (mean, stable) = if s == 0.0 {
            (1.0, 1.0)
        } else {
            (
                full / nonzero,
                (full - trim_sum) / (nonzero - trim_weight),
            )
        };
        prefix_means.push(if nonzero > 0.0 { mean } else { f64::NAN });
        stable_means.push(if nonzero > trim_weight { stable } else { f64::NAN });
    }
    let value = *prefix_means.last().expect("four prefixes");
    let divergent = stable_means
        .windows(2)
        .any(|w| !((w[1] - w[0]).abs() <= ENERGY_STABILITY_TOL * w[0].abs()));
    Ok(Energy {
        s,
        value,
        prefix_means,
        stable_means,
        divergent,
        cutoff: if delta.is_finite() { delta } else { 0.0 },
        near_pairs,
        points: n,
        zero_pairs: acc.zeros + sampled_zeros,
        pairs: near_pairs + sampled_pairs,
    })
}

/// Total weight of the unordered pairs among the first `m` points.
fn prefix_pair_weight(cloud: &PointCloud, m: usize) -> f64 {
    match cloud.weights() {
        None => m as f64 * (m as f64 - 1.0) / 2.0,
        Some(w) => {
            let (a, b) = w[..m]
                .iter()
                .fold((0.0, 0.0), |(a, b), &x| (a + x, b + x * x));
            (a * a - b) / 2.0
        }
    }
}
