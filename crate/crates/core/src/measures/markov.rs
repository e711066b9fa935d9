//! k-step Markov measures on Aᴺ.
//!
//! States are words of length `k`, indexed big-endian in base `m`. The
//! transition from state `s = w₁…w_k` on symbol `a` goes to `w₂…w_k a`,
//! i.e. `(s·m + a) mod mᵏ`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::symbolic::Alphabet;

/// Residual target (ℓ¹) for stationary distributions.
pub const STATIONARY_TOL: f64 = 1e-13;
const STATIONARY_MAX_ITERS: usize = 10_000_000;
/// Tolerance used when validating user-supplied stationary distributions.
const CONSISTENCY_TOL: f64 = 1e-9;

/// A k-step Markov measure given by its stationary k-block distribution and
/// its transition kernel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkovMeasure {
    alphabet: Alphabet,
    order: usize,
    stationary: Vec<f64>,
    /// Row-major `mᵏ × m`; rows of zero-mass states are identically 0.
    kernel: Vec<f64>,
}

impl MarkovMeasure {
    /// Build from an explicit stationary distribution and kernel.
    ///
    /// Checks row sums on positive-mass states, shift consistency of the
    /// stationary distribution and its invariance under the kernel.
    pub fn new(
        alphabet: Alphabet,
        order: usize,
        stationary: Vec<f64>,
        kernel: Vec<f64>,
    ) -> Result<Self> {
        let m = alphabet.size();
        let states = state_count(alphabet, order)?;
        if stationary.len() != states {
            return Err(Error::DimensionMismatch {
                expected: states,
                found: stationary.len(),
            });
        }
        if kernel.len() != states * m {
            return Err(Error::DimensionMismatch {
                expected: states * m,
                found: kernel.len(),
            });
        }
        check_distribution(&stationary, "stationary distribution")?;
        let mut kernel = kernel;
        for s in 0..states {
            let row = &mut kernel[s * m..(s + 1) * m];
            if row.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::InvalidProbability(format!(
                    "kernel row {s} has invalid entries"
                )));
            }
            if stationary[s] > 0.0 {
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > CONSISTENCY_TOL {
                    return Err(Error::InvalidProbability(format!(
                        "kernel row {s} sums to {sum}"
                    )));
                }
            } else {
                row.iter_mut().for_each(|x| *x = 0.0);
            }
        }
        let mu = Self {
            alphabet,
            order,
            stationary,
            kernel,
        };
        mu.check_shift_consistency()?;
        mu.check_invariance()?;
        Ok(mu)
    }

    /// Build from a kernel alone; every row must be a probability vector.
    /// The stationary distribution is found by power iteration on the lazy
    /// chain after checking that the state graph has a single closed class.
    pub fn from_kernel(alphabet: Alphabet, order: usize, kernel: Vec<f64>) -> Result<Self> {
        let m = alphabet.size();
        let states = state_count(alphabet, order)?;
        if kernel.len() != states * m {
            return Err(Error::DimensionMismatch {
                expected: states * m,
                found: kernel.len(),
            });
        }
        for s in 0..states {
            check_distribution(&kernel[s * m..(s + 1) * m], &format!("kernel row {s}"))?;
        }
        let support: Vec<bool> = vec![true; states];
        let stationary = stationary_distribution(alphabet, order, &kernel, &support)?;
        Self::new(alphabet, order, stationary, kernel)
    }

    /// Bernoulli(p) as a 1-step Markov measure.
    pub fn from_bernoulli(p: &[f64]) -> Result<Self> {
        let alphabet = Alphabet::new(p.len())?;
        check_distribution(p, "probability vector")?;
        let kernel = p.iter().cycle().take(p.len() * p.len()).copied().collect();
        Self::new(alphabet, 1, p.to_vec(), kernel)
    }

    /// The k-step Markov measure determined by a (k+1)-block distribution.
    ///
    /// `blocks[idx(w)]` is the mass of the word `w` of length `k+1`. The
    /// table must be shift consistent (both k-marginals agree).
    pub fn from_blocks(alphabet: Alphabet, order: usize, blocks: &[f64]) -> Result<Self> {
        let m = alphabet.size();
        let states = state_count(alphabet, order)?;
        if blocks.len() != states * m {
            return Err(Error::DimensionMismatch {
                expected: states * m,
                found: blocks.len(),
            });
        }
        let stationary: Vec<f64> = (0..states)
            .map(|s| blocks[s * m..(s + 1) * m].iter().sum())
            .collect();
        let kernel = kernel_from_blocks(m, &stationary, blocks);
        Self::new(alphabet, order, stationary, kernel)
    }

    /// Empirical k-step Markov measure from the cyclic (k+1)-block
    /// frequencies of a sampled word.
    pub fn from_word_blocks(alphabet: Alphabet, order: usize, word: &[u8]) -> Result<Self> {
        let m = alphabet.size();
        let len = word.len();
        if len <= order {
            return Err(Error::InsufficientData(format!(
                "need more than {order} symbols, got {len}"
            )));
        }
        let states = state_count(alphabet, order)?;
        let mut counts = vec![0u64; states * m];
        for start in 0..len {
            let idx = (0..=order).fold(0usize, |acc, j| acc * m + word[(start + j) % len] as usize);
            counts[idx] += 1;
        }
        let blocks: Vec<f64> = counts.iter().map(|&c| c as f64 / len as f64).collect();
        Self::from_blocks(alphabet, order, &blocks)
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn state_count(&self) -> usize {
        self.stationary.len()
    }

    /// `P(a | state)`.
    pub fn transition(&self, state: usize, symbol: usize) -> f64 {
        self.kernel[state * self.alphabet.size() + symbol]
    }

    pub(crate) fn next_state(&self, state: usize, symbol: usize) -> usize {
        (state * self.alphabet.size() + symbol) % self.stationary.len()
    }

    /// Mass of the cylinder `[w]`.
    pub fn cylinder_mass(&self, w: &[u8]) -> f64 {
        let m = self.alphabet.size();
        let k = self.order;
        if w.len() < k {
            let head = w.iter().fold(0usize, |acc, &s| acc * m + s as usize);
            let span = m.pow((k - w.len()) as u32);
            return self.stationary[head * span..(head + 1) * span].iter().sum();
        }
        let mut state = w[..k].iter().fold(0usize, |acc, &s| acc * m + s as usize);
        let mut mass = self.stationary[state];
        for &a in &w[k..] {
            if mass == 0.0 {
                return 0.0;
            }
            mass *= self.transition(state, a as usize);
            state = self.next_state(state, a as usize);
        }
        mass
    }

    /// Masses of all cylinders of length `n`, indexed big-endian.
    pub fn block_masses(&self, n: usize) -> Vec<f64> {
        let m = self.alphabet.size();
        let k = self.order;
        if n <= k {
            let span = m.pow((k - n) as u32);
            return self
                .stationary
                .chunks(span)
                .map(|c| c.iter().sum())
                .collect();
        }
        let mut masses = self.stationary.clone();
        let states = self.stationary.len();
        for _ in k..n {
            let mut next = Vec::with_capacity(masses.len() * m);
            for (idx, &mass) in masses.iter().enumerate() {
                let state = idx % states;
                for a in 0..m {
                    next.push(mass * self.transition(state, a));
                }
            }
            masses = next;
        }
        masses
    }

    /// Kolmogorov–Sinai entropy in nats: `−Σ_s π(s) Σ_a P(a|s) log P(a|s)`.
    pub fn entropy(&self) -> f64 {
        let m = self.alphabet.size();
        let mut h = 0.0;
        for (s, &pi) in self.stationary.iter().enumerate() {
            if pi == 0.0 {
                continue;
            }
            for &p in &self.kernel[s * m..(s + 1) * m] {
                if p > 0.0 {
                    h -= pi * p * p.ln();
                }
            }
        }
        h
    }

    /// Ergodicity criterion: every pair of positive-mass states is joined
    /// by a positive-mass path.
    pub fn is_ergodic(&self) -> bool {
        let support: Vec<bool> = self.stationary.iter().map(|&p| p > 0.0).collect();
        let adj = self.positive_graph(&support);
        strongly_connected(&adj, &support)
    }

    fn positive_graph(&self, support: &[bool]) -> Vec<Vec<usize>> {
        positive_graph(self.alphabet, &self.kernel, support)
    }

    /// Kernel rounded to multiples of `1/D` with the same zero pattern.
    ///
    /// Each row is rounded to nearest, positive entries are clamped to at
    /// least `1/D`, and the row total is repaired to exactly `D/D` by the
    /// largest-remainder rule. The stationary distribution is recomputed on
    /// the original support.
    pub fn rational_approx(&self, denominator: u64) -> Result<MarkovMeasure> {
        if denominator == 0 {
            return Err(Error::InvalidParameter(
                "denominator must be positive".into(),
            ));
        }
        if !self.is_ergodic() {
            return Err(Error::NotIrreducible(
                "rational approximation needs an ergodic measure".into(),
            ));
        }
        let m = self.alphabet.size();
        let d = denominator as i64;
        let support: Vec<bool> = self.stationary.iter().map(|&p| p > 0.0).collect();
        let mut kernel = vec![0.0; self.kernel.len()];
        for (s, &on) in support.iter().enumerate() {
            if !on {
                continue;
            }
            let row = &self.kernel[s * m..(s + 1) * m];
            let counts = round_row(row, d).ok_or(Error::DenominatorTooSmall {
                denominator,
                positives: row.iter().filter(|&&x| x > 0.0).count(),
            })?;
            for (a, c) in counts.into_iter().enumerate() {
                kernel[s * m + a] = c as f64 / d as f64;
            }
        }
        let adj = positive_graph(self.alphabet, &kernel, &support);
        if !strongly_connected(&adj, &support) {
            return Err(Error::NotIrreducible(
                "rounded kernel is not irreducible on the original support".into(),
            ));
        }
        let stationary = stationary_distribution(self.alphabet, self.order, &kernel, &support)?;
        MarkovMeasure::new(self.alphabet, self.order, stationary, kernel)
    }

    fn check_shift_consistency(&self) -> Result<()> {
        let m = self.alphabet.size();
        let k = self.order;
        if k < 2 {
            return Ok(());
        }
        // Σ_a ν(a·w) = Σ_b ν(w·b) for w of length k−1
        let inner = m.pow((k - 1) as u32);
        for w in 0..inner {
            let left: f64 = (0..m).map(|a| self.stationary[a * inner + w]).sum();
            let right: f64 = (0..m).map(|b| self.stationary[w * m + b]).sum();
            if (left - right).abs() > CONSISTENCY_TOL {
                return Err(Error::InvalidProbability(format!(
                    "stationary distribution not shift consistent at word index {w}: {left} vs {right}"
                )));
            }
        }
        Ok(())
    }

    fn check_invariance(&self) -> Result<()> {
        let pushed = push_forward(self.alphabet, &self.kernel, &self.stationary);
        let residual: f64 = pushed
            .iter()
            .zip(&self.stationary)
            .map(|(a, b)| (a - b).abs())
            .sum();
        if residual > CONSISTENCY_TOL {
            return Err(Error::InvalidProbability(format!(
                "stationary distribution not invariant under the kernel (residual {residual:e})"
            )));
        }
        Ok(())
    }
}

fn state_count(alphabet: Alphabet, order: usize) -> Result<usize> {
    if order == 0 {
        return Err(Error::InvalidParameter(
            "Markov order must be at least 1".into(),
        ));
    }
    alphabet
        .word_count(order)
        .filter(|&n| n <= 1 << 26)
        .ok_or_else(|| Error::InvalidParameter(format!("order {order} too large")))
}

pub(crate) fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidProbability(format!(
            "{what} has negative or non-finite entries"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidProbability(format!("{what} sums to {sum}")));
    }
    Ok(())
}

pub(crate) fn kernel_from_blocks(m: usize, stationary: &[f64], blocks: &[f64]) -> Vec<f64> {
    let mut kernel = vec![0.0; blocks.len()];
    for (s, &pi) in stationary.iter().enumerate() {
        if pi > 0.0 {
            for a in 0..m {
                kernel[s * m + a] = blocks[s * m + a] / pi;
            }
        }
    }
    kernel
}

fn push_forward(alphabet: Alphabet, kernel: &[f64], dist: &[f64]) -> Vec<f64> {
    let m = alphabet.size();
    let states = dist.len();
    let mut out = vec![0.0; states];
    for (s, &mass) in dist.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        for a in 0..m {
            out[(s * m + a) % states] += mass * kernel[s * m + a];
        }
    }
    out
}

fn positive_graph(alphabet: Alphabet, kernel: &[f64], support: &[bool]) -> Vec<Vec<usize>> {
    let m = alphabet.size();
    let states = support.len();
    (0..states)
        .map(|s| {
            if !support[s] {
                return Vec::new();
            }
            (0..m)
                .filter(|&a| kernel[s * m + a] > 0.0)
                .map(|a| (s * m + a) % states)
                .filter(|&t| support[t])
                .collect()
        })
        .collect()
}

fn reachable(adj: &[Vec<usize>], from: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(s) = stack.pop() {
        for &t in &adj[s] {
            if !seen[t] {
                seen[t] = true;
                stack.push(t);
            }
        }
    }
    seen
}

fn strongly_connected(adj: &[Vec<usize>], support: &[bool]) -> bool {
    let Some(root) = support.iter().position(|&b| b) else {
        return false;
    };
    let forward = reachable(adj, root);
    let mut reverse = vec![Vec::new(); adj.len()];
    for (s, targets) in adj.iter().enumerate() {
        for &t in targets {
            reverse[t].push(s);
        }
    }
    let backward = reachable(&reverse, root);
    support
        .iter()
        .enumerate()
        .all(|(s, &on)| !on || (forward[s] && backward[s]))
}

/// Closed communicating classes of the graph restricted to `support`.
fn closed_classes(adj: &[Vec<usize>], support: &[bool]) -> Vec<Vec<usize>> {
    let n = adj.len();
    let reach: Vec<Vec<bool>> = (0..n)
        .map(|s| {
            if support[s] {
                reachable(adj, s)
            } else {
                vec![false; n]
            }
        })
        .collect();
    let mut assigned = vec![false; n];
    let mut classes = Vec::new();
    for s in 0..n {
        if !support[s] || assigned[s] {
            continue;
        }
        let class: Vec<usize> = (0..n)
            .filter(|&t| support[t] && reach[s][t] && reach[t][s])
            .collect();
        for &t in &class {
            assigned[t] = true;
        }
        let closed = class
            .iter()
            .all(|&t| (0..n).all(|u| !reach[t][u] || reach[u][t]));
        if closed {
            classes.push(class);
        }
    }
    classes
}

/// Stationary distribution of `kernel` on the states marked in `support`,
/// by power iteration on `(I + P)/2`.
pub(crate) fn stationary_distribution(
    alphabet: Alphabet,
    _order: usize,
    kernel: &[f64],
    support: &[bool],
) -> Result<Vec<f64>> {
    let adj = positive_graph(alphabet, kernel, support);
    let classes = closed_classes(&adj, support);
    if classes.len() != 1 {
        return Err(Error::NotIrreducible(format!(
            "{} closed classes; the stationary distribution is not unique",
            classes.len()
        )));
    }
    let states = support.len();
    let mut dist = vec![0.0; states];
    let class = &classes[0];
    for &s in class {
        dist[s] = 1.0 / class.len() as f64;
    }
    for _ in 0..STATIONARY_MAX_ITERS {
        let pushed = push_forward(alphabet, kernel, &dist);
        let next: Vec<f64> = dist
            .iter()
            .zip(&pushed)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let total: f64 = next.iter().sum();
        let next: Vec<f64> = next.iter().map(|x| x / total).collect();
        let residual: f64 = pushed.iter().zip(&dist).map(|(a, b)| (a - b).abs()).sum();
        dist = next;
        if residual < STATIONARY_TOL {
            return Ok(dist);
        }
    }
    Err(Error::NotIrreducible(
        "power iteration did not converge".into(),
    ))
}

/// Round one kernel row to integer counts out of `d`, positive entries at
/// least 1, zeros kept, counts summing to `d`.
fn round_row(row: &[f64], d: i64) -> Option<Vec<i64>> {
    let positives = row.iter().filter(|&&x| x > 0.0).count() as i64;
    if positives > d {
        return None;
    }
    let mut counts: Vec<i64> = row
        .iter()
        .map(|&x| {
            if x > 0.0 {
                ((x * d as f64).round() as i64).max(1)
            } else {
                0
            }
        })
        .collect();
    let mut excess: i64 = counts.iter().sum::<i64>() - d;
    while excess != 0 {
        // overshoot of each positive entry relative to its exact value
        let pick = counts
            .iter()
            .zip(row)
            .enumerate()
            .filter(|(_, (&c, &x))| x > 0.0 && (excess < 0 || c > 1))
            .map(|(i, (&c, &x))| (i, c as f64 - x * d as f64))
            .max_by(|a, b| {
                let (ka, kb) = if excess > 0 { (a.1, b.1) } else { (-a.1, -b.1) };
                ka.total_cmp(&kb).then(b.0.cmp(&a.0))
            })?;
        if excess > 0 {
            counts[pick.0] -= 1;
            excess -= 1;
        } else {
            counts[pick.0] += 1;
            excess += 1;
        }
    }
    Some(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary() -> Alphabet {
        Alphabet::new(2).unwrap()
    }

    fn sticky() -> MarkovMeasure {
        MarkovMeasure::new(binary(), 1, vec![0.5, 0.5], vec![0.9, 0.1, 0.1, 0.9]).unwrap()
    }

    #[test]
    fn cylinder_mass_examples() {
        let mu = sticky();
        assert!((mu.cylinder_mass(&[0, 0]) - 0.45).abs() < 1e-15);
        assert_eq!(mu.cylinder_mass(&[]), 1.0);
    }

    #[test]
    fn entropy_example() {
        let h = sticky().entropy();
        let expected = -(0.9f64 * 0.9f64.ln() + 0.1 * 0.1f64.ln());
        assert!((h - expected).abs() < 1e-15);
        assert!((h - 0.3250830).abs() < 1e-7);
    }

    #[test]
    fn ergodicity_examples() {
        assert!(MarkovMeasure::from_bernoulli(&[0.5, 0.5])
            .unwrap()
            .is_ergodic());
        let identity =
            MarkovMeasure::new(binary(), 1, vec![0.5, 0.5], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(!identity.is_ergodic());
        let flip =
            MarkovMeasure::new(binary(), 1, vec![0.5, 0.5], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!(flip.is_ergodic());
    }

    #[test]
    fn periodic_kernel_has_stationary_distribution() {
        let flip = MarkovMeasure::from_kernel(binary(), 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!((flip.stationary()[0] - 0.5).abs() < 1e-13);
    }

    #[test]
    fn reducible_kernel_rejected() {
        let identity = MarkovMeasure::from_kernel(binary(), 1, vec![1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(identity, Err(Error::NotIrreducible(_))));
    }

    #[test]
    fn inconsistent_stationary_rejected() {
        let bad = MarkovMeasure::new(binary(), 1, vec![0.3, 0.7], vec![0.9, 0.1, 0.1, 0.9]);
        assert!(matches!(bad, Err(Error::InvalidProbability(_))));
    }

    #[test]
    fn block_masses_match_cylinder_mass() {
        let a = Alphabet::new(3).unwrap();
        let kernel = vec![
            0.2, 0.3, 0.5, 0.1, 0.1, 0.8, 0.6, 0.2, 0.2, //
            0.3, 0.3, 0.4, 0.5, 0.0, 0.5, 0.7, 0.1, 0.2, //
            0.1, 0.6, 0.3, 0.2, 0.2, 0.6, 0.4, 0.4, 0.2,
        ];
        let mu = MarkovMeasure::from_kernel(a, 2, kernel).unwrap();
        for n in 0..5 {
            let masses = mu.block_masses(n);
            let total: f64 = masses.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            for (idx, w) in a.words(n).enumerate() {
                assert!((masses[idx] - mu.cylinder_mass(w.symbols())).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rational_approx_examples() {
        let mu = sticky();
        let same = mu.rational_approx(10).unwrap();
        for (a, b) in same.kernel().iter().zip(mu.kernel()) {
            assert!((a - b).abs() < 1e-15);
        }
        let skewed =
            MarkovMeasure::new(binary(), 1, vec![0.5, 0.5], vec![0.85, 0.15, 0.15, 0.85]).unwrap();
        let coarse = skewed.rational_approx(3).unwrap();
        let k = coarse.kernel();
        assert!((k[0] - 2.0 / 3.0).abs() < 1e-15 && (k[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!(k.iter().all(|&x| x > 0.0));
        for &x in k {
            assert!(((x * 3.0).round() - x * 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rational_approx_keeps_zeros() {
        let a = Alphabet::new(3).unwrap();
        let kernel = vec![0.0, 0.33, 0.67, 0.5, 0.0, 0.5, 0.999, 0.001, 0.0];
        let mu = MarkovMeasure::from_kernel(a, 1, kernel).unwrap();
        let approx = mu.rational_approx(7).unwrap();
        for (x, y) in mu.kernel().iter().zip(approx.kernel()) {
            assert_eq!(*x == 0.0, *y == 0.0);
        }
        assert!(matches!(
            MarkovMeasure::from_kernel(Alphabet::new(3).unwrap(), 1, vec![1.0 / 3.0; 9])
                .unwrap()
                .rational_approx(2),
            Err(Error::DenominatorTooSmall { .. })
        ));
    }

    #[test]
    fn rational_approx_converges() {
        let a = Alphabet::new(3).unwrap();
        let kernel = vec![0.123, 0.456, 0.421, 0.3141, 0.2718, 0.4141, 0.05, 0.0, 0.95];
        let mu = MarkovMeasure::from_kernel(a, 1, kernel).unwrap();
        let mut last = f64::INFINITY;
        for d in [10u64, 100, 1000, 10000] {
            let approx = mu.rational_approx(d).unwrap();
            let kl = super::super::relative_entropy(&mu.clone().into(), &approx).unwrap();
            assert!(kl <= last + 1e-15);
            last = kl;
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn empirical_blocks_are_consistent() {
        let word: Vec<u8> = (0..1000u32).map(|i| ((i * 7 + i / 3) % 3) as u8).collect();
        let mu = MarkovMeasure::from_word_blocks(Alphabet::new(3).unwrap(), 2, &word).unwrap();
        let total: f64 = mu.stationary().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
