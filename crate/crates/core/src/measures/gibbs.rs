//! Gibbs measures of locally constant potentials via the transfer matrix.

use serde::Serialize;

use super::markov::MarkovMeasure;
use crate::error::{Error, Result};
use crate::symbolic::Alphabet;

const PERRON_TOL: f64 = 1e-15;
const PERRON_MAX_ITERS: usize = 2_000_000;

/// A potential depending on the first `depth` symbols. Entries may be
/// `-∞` to forbid a block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Potential {
    alphabet: Alphabet,
    depth: usize,
    table: Vec<f64>,
}

impl Potential {
    pub fn new(alphabet: Alphabet, depth: usize, table: Vec<f64>) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidParameter(
                "potential depth must be at least 1".into(),
            ));
        }
        let size = alphabet
            .word_count(depth)
            .filter(|&n| n <= 1 << 20)
            .ok_or_else(|| Error::InvalidParameter(format!("potential depth {depth} too large")))?;
        if table.len() != size {
            return Err(Error::DimensionMismatch {
                expected: size,
                found: table.len(),
            });
        }
        if table.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(Error::InvalidParameter(
                "potential entries must be finite or -inf".into(),
            ));
        }
        if table.iter().all(|x| !x.is_finite()) {
            return Err(Error::Degenerate("potential forbids every block".into()));
        }
        Ok(Self {
            alphabet,
            depth,
            table,
        })
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// `max |φ|` over permitted blocks.
    pub fn sup_norm(&self) -> f64 {
        self.table
            .iter()
            .filter(|x| x.is_finite())
            .fold(0.0, |acc: f64, x| acc.max(x.abs()))
    }

    /// `φ` evaluated at a word whose first `depth` symbols are `w`.
    pub fn eval(&self, w: &[u8]) -> f64 {
        let m = self.alphabet.size();
        let idx = w[..self.depth]
            .iter()
            .fold(0usize, |acc, &s| acc * m + s as usize);
        self.table[idx]
    }

    /// Markov state length used by the transfer matrix.
    fn state_len(&self) -> usize {
        (self.depth - 1).max(1)
    }
}

/// The equilibrium measure of a potential together with its pressure and
/// an explicit Gibbs constant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GibbsMeasure {
    potential: Potential,
    markov: MarkovMeasure,
    pressure: f64,
    constant: f64,
}

/// Result of checking the Gibbs inequality on all cylinders up to a length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GibbsReport {
    pub max_len: usize,
    /// Largest observed `|log(μ[w] / exp(−Pn + Sₙφ))|`.
    pub max_log_ratio: f64,
    pub log_constant: f64,
    pub holds: bool,
}

impl GibbsMeasure {
    /// Build the transfer matrix on states `A^s` (`s = max(depth−1, 1)`),
    /// take its Perron data and form the associated Markov measure.
    pub fn from_potential(potential: Potential) -> Result<Self> {
        let m = potential.alphabet.size();
        let s = potential.state_len();
        let states = m.pow(s as u32);
        // transition state u --a--> (u·a) shifted; weight e^{φ(u·a)} for
        // depth ≥ 2 and e^{φ(a)} for depth 1
        let weight = |u: usize, a: usize| -> f64 {
            if potential.depth == 1 {
                potential.table[a].exp()
            } else {
                potential.table[u * m + a].exp()
            }
        };
        let next = |u: usize, a: usize| (u * m + a) % states;

        let adj: Vec<Vec<usize>> = (0..states)
            .map(|u| {
                (0..m)
                    .filter(|&a| weight(u, a) > 0.0)
                    .map(|a| next(u, a))
                    .collect()
            })
            .collect();
        if !irreducible(&adj) {
            return Err(Error::NotIrreducible(
                "transfer matrix of the potential is reducible; the Gibbs measure is not unique"
                    .into(),
            ));
        }

        let scale = (0..states)
            .flat_map(|u| (0..m).map(move |a| (u, a)))
            .map(|(u, a)| weight(u, a))
            .fold(0.0, f64::max);
        // right: (M r)_u = Σ_a w(u,a) r_{next}; left: (l M)_v = Σ l_u w(u,a)
        let right = perron(states, |v: &[f64], out: &mut [f64]| {
            for u in 0..states {
                out[u] = (0..m).map(|a| weight(u, a) / scale * v[next(u, a)]).sum();
            }
        })?;
        let left = perron(states, |v: &[f64], out: &mut [f64]| {
            out.iter_mut().for_each(|x| *x = 0.0);
            for u in 0..states {
                for a in 0..m {
                    out[next(u, a)] += v[u] * weight(u, a) / scale;
                }
            }
        })?;
        let rho = right.0 * scale;
        let r = right.1;
        let mut l = left.1;
        let norm: f64 = l.iter().zip(&r).map(|(a, b)| a * b).sum();
        l.iter_mut().for_each(|x| *x /= norm);

        let stationary: Vec<f64> = l.iter().zip(&r).map(|(a, b)| a * b).collect();
        let mut kernel = vec![0.0; states * m];
        for u in 0..states {
            for a in 0..m {
                kernel[u * m + a] = weight(u, a) * r[next(u, a)] / (rho * r[u]);
            }
            // remove rounding drift so rows sum to 1
            let sum: f64 = kernel[u * m..(u + 1) * m].iter().sum();
            kernel[u * m..(u + 1) * m]
                .iter_mut()
                .for_each(|x| *x /= sum);
        }
        let markov = MarkovMeasure::new(potential.alphabet, s, stationary, kernel)?;

        let pressure = rho.ln();
        let norm_phi = potential.sup_norm();
        let (lmin, lmax) = min_max(&l);
        let (rmin, rmax) = min_max(&r);
        let sf = s as f64;
        let upper = lmax * rmax * (sf * (pressure + norm_phi)).exp();
        let lower = lmin * rmin * (sf * (pressure - norm_phi)).exp();
        let mut constant = upper.max(1.0 / lower);

        let mut g = Self {
            potential,
            markov,
            pressure,
            constant,
        };
        // Words shorter than the state length are not covered by the
        // product formula; fold their exact ratios in.
        for n in 1..s {
            let worst = g.scan_ratios(n).exp();
            constant = constant.max(worst);
        }
        g.constant = constant;
        Ok(g)
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn markov(&self) -> &MarkovMeasure {
        &self.markov
    }

    /// Topological pressure `P(φ)` (log of the spectral radius).
    pub fn pressure(&self) -> f64 {
        self.pressure
    }

    /// The constant `C` of the Gibbs inequality.
    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// Largest `|log(μ[w] / exp(−Pn + Sₙφ(ω)))|` over words `w` of length
    /// `n` and every continuation of `depth − 1` further symbols.
    fn scan_ratios(&self, n: usize) -> f64 {
        let m = self.potential.alphabet.size();
        let tail = self.potential.depth - 1;
        let masses = self.markov.block_masses(n);
        let tails = m.pow(tail as u32);
        let mut worst: f64 = 0.0;
        let mut buf = vec![0u8; n + tail];
        for (idx, &mass) in masses.iter().enumerate() {
            for t in 0..tails {
                let full = idx * tails + t;
                let mut x = full;
                for slot in buf.iter_mut().rev() {
                    *slot = (x % m) as u8;
                    x /= m;
                }
                let birkhoff: f64 = (0..n).map(|k| self.potential.eval(&buf[k..])).sum();
                if birkhoff == f64::NEG_INFINITY {
                    // ω leaves the support; the inequality says nothing
                    continue;
                }
                if mass == 0.0 {
                    return f64::INFINITY;
                }
                let log_ratio = mass.ln() + self.pressure * n as f64 - birkhoff;
                worst = worst.max(log_ratio.abs());
            }
        }
        worst
    }

    /// Check `C⁻¹ ≤ μ[ω|ₙ] / exp(−Pn + Sₙφ(ω)) ≤ C` for all `n ≤ max_len`.
    pub fn verify_inequality(&self, max_len: usize) -> Result<GibbsReport> {
        let m = self.potential.alphabet.size();
        let needed = (m as u128).pow((max_len + self.potential.depth - 1) as u32);
        let budget = crate::budget();
        if needed > budget as u128 {
            return Err(Error::BudgetExceeded { needed, budget });
        }
        let max_log_ratio = (1..=max_len)
            .map(|n| self.scan_ratios(n))
            .fold(0.0, f64::max);
        let log_constant = self.constant.ln();
        Ok(GibbsReport {
            max_len,
            max_log_ratio,
            log_constant,
            holds: max_log_ratio <= log_constant * (1.0 + 1e-12) + 1e-12,
        })
    }

    /// Bound on `μ[ω|ₙ₋ₙ]/μ[ω|ₙ₊₁]` implied by the Gibbs inequality.
    pub fn regularity_bound(&self, gap: usize) -> f64 {
        self.constant.powi(2)
            * ((gap as f64 + 1.0) * (self.pressure + self.potential.sup_norm())).exp()
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

fn irreducible(adj: &[Vec<usize>]) -> bool {
    let n = adj.len();
    let reach = |adj: &[Vec<usize>]| {
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|b| b)
    };
    let mut rev = vec![Vec::new(); n];
    for (u, vs) in adj.iter().enumerate() {
        for &v in vs {
            rev[v].push(u);
        }
    }
    reach(adj) && reach(&rev)
}

/// Perron root and positive eigenvector of a nonnegative irreducible
/// operator, by power iteration on `A + I` (which is primitive).
fn perron(n: usize, apply: impl Fn(&[f64], &mut [f64])) -> Result<(f64, Vec<f64>)> {
    let mut v = vec![1.0 / n as f64; n];
    let mut av = vec![0.0; n];
    for _ in 0..PERRON_MAX_ITERS {
        apply(&v, &mut av);
        let w: Vec<f64> = v.iter().zip(&av).map(|(x, y)| x + y).collect();
        let total: f64 = w.iter().sum();
        let w: Vec<f64> = w.iter().map(|x| x / total).collect();
        let diff: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        v = w;
        if diff < PERRON_TOL {
            apply(&v, &mut av);
            let lambda = av.iter().sum::<f64>() / v.iter().sum::<f64>();
            return Ok((lambda, v));
        }
    }
    Err(Error::NotIrreducible(
        "Perron iteration did not converge".into(),
    ))
}
