//! Exact shift-invariant measures on Σ: Bernoulli, k-step Markov and Gibbs
//! measures of locally constant potentials.
//!
//! Entropies are in nats and follow `0·log 0 = 0·log(0/0) = 0`.

mod gibbs;
pub(crate) mod markov;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::Serialize;

pub use gibbs::{GibbsMeasure, GibbsReport, Potential};
pub use markov::{MarkovMeasure, STATIONARY_TOL};

use crate::error::{Error, Result};
use crate::par;
use crate::symbolic::{Alphabet, Word};

/// Product measure `p^ℕ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BernoulliMeasure {
    alphabet: Alphabet,
    p: Vec<f64>,
}

impl BernoulliMeasure {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        let alphabet = Alphabet::new(p.len())?;
        markov::check_distribution(&p, "probability vector")?;
        Ok(Self { alphabet, p })
    }

    pub fn uniform(m: usize) -> Result<Self> {
        Self::new(vec![1.0 / m as f64; m])
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn to_markov(&self) -> MarkovMeasure {
        MarkovMeasure::from_bernoulli(&self.p).expect("validated Bernoulli vector")
    }
}

/// Any of the exact measure families.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Measure {
    Bernoulli(BernoulliMeasure),
    Markov(MarkovMeasure),
    Gibbs(GibbsMeasure),
}

impl From<BernoulliMeasure> for Measure {
    fn from(b: BernoulliMeasure) -> Self {
        Measure::Bernoulli(b)
    }
}

impl From<MarkovMeasure> for Measure {
    fn from(m: MarkovMeasure) -> Self {
        Measure::Markov(m)
    }
}

impl From<GibbsMeasure> for Measure {
    fn from(g: GibbsMeasure) -> Self {
        Measure::Gibbs(g)
    }
}

/// Symbols per independently seeded chunk when sampling Bernoulli words.
const SAMPLE_CHUNK: usize = 1 << 16;

impl Measure {
    pub fn alphabet(&self) -> Alphabet {
        match self {
            Measure::Bernoulli(b) => b.alphabet,
            Measure::Markov(m) => m.alphabet(),
            Measure::Gibbs(g) => g.markov().alphabet(),
        }
    }

    /// Memory of the measure; 0 for Bernoulli.
    pub fn order(&self) -> usize {
        match self {
            Measure::Bernoulli(_) => 0,
            Measure::Markov(m) => m.order(),
            Measure::Gibbs(g) => g.markov().order(),
        }
    }

    /// The measure as a Markov measure of order `max(order, 1)`.
    pub fn as_markov(&self) -> MarkovMeasure {
        match self {
            Measure::Bernoulli(b) => b.to_markov(),
            Measure::Markov(m) => m.clone(),
            Measure::Gibbs(g) => g.markov().clone(),
        }
    }

    /// `μ([w])`; the empty word has mass 1.
    pub fn cylinder_mass(&self, w: &Word) -> Result<f64> {
        self.check_alphabet(w.alphabet())?;
        Ok(self.cylinder_mass_symbols(w.symbols()))
    }

    pub(crate) fn cylinder_mass_symbols(&self, w: &[u8]) -> f64 {
        match self {
            Measure::Bernoulli(b) => w.iter().map(|&s| b.p[s as usize]).product(),
            Measure::Markov(m) => m.cylinder_mass(w),
            Measure::Gibbs(g) => g.markov().cylinder_mass(w),
        }
    }

    /// Masses of all `mⁿ` cylinders of length `n`, big-endian index order.
    pub fn block_masses(&self, n: usize) -> Vec<f64> {
        match self {
            Measure::Bernoulli(b) => {
                let mut masses = vec![1.0];
                for _ in 0..n {
                    masses = masses
                        .iter()
                        .flat_map(|&x| b.p.iter().map(move |&p| x * p))
                        .collect();
                }
                masses
            }
            Measure::Markov(m) => m.block_masses(n),
            Measure::Gibbs(g) => g.markov().block_masses(n),
        }
    }

    /// Kolmogorov–Sinai entropy in nats.
    pub fn entropy(&self) -> f64 {
        match self {
            Measure::Bernoulli(b) => b.p.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum(),
            Measure::Markov(m) => m.entropy(),
            Measure::Gibbs(g) => g.markov().entropy(),
        }
    }

    /// Word of length `n` distributed as `μ|ₙ`, deterministic in `seed`.
    pub fn sample_word(&self, n: usize, seed: u64) -> Result<Word> {
        if n == 0 {
            return Err(Error::InvalidParameter(
                "sample length must be at least 1".into(),
            ));
        }
        match self {
            Measure::Bernoulli(b) => sample_bernoulli(b, n, seed),
            _ => {
                let mu = self.as_markov();
                let mut rng = par::stream_rng(seed, 0);
                let start = WeightedIndex::new(mu.stationary())
                    .map_err(|e| Error::InvalidProbability(e.to_string()))?
                    .sample(&mut rng);
                let head = Word::from_index(mu.alphabet(), start, mu.order());
                sample_markov_from(&mu, head.symbols(), n, &mut rng)
            }
        }
    }

    /// Like [`Measure::sample_word`] but with the first symbols fixed to
    /// `initial`, which must have length at least the Markov order.
    pub fn sample_word_from(&self, initial: &[u8], n: usize, seed: u64) -> Result<Word> {
        let mu = self.as_markov();
        if initial.len() < mu.order() {
            return Err(Error::WordTooShort {
                required: mu.order(),
                actual: initial.len(),
            });
        }
        if let Some(&s) = initial
            .iter()
            .find(|&&s| s as usize >= mu.alphabet().size())
        {
            return Err(Error::SymbolOutOfRange {
                symbol: s as usize,
                size: mu.alphabet().size(),
            });
        }
        let mut rng = par::stream_rng(seed, 0);
        sample_markov_from(&mu, initial, n, &mut rng)
    }

    fn check_alphabet(&self, other: Alphabet) -> Result<()> {
        if other != self.alphabet() {
            return Err(Error::AlphabetMismatch {
                left: self.alphabet().size(),
                right: other.size(),
            });
        }
        Ok(())
    }
}

fn sample_bernoulli(b: &BernoulliMeasure, n: usize, seed: u64) -> Result<Word> {
    let dist = WeightedIndex::new(&b.p).map_err(|e| Error::InvalidProbability(e.to_string()))?;
    let chunks = par::map_chunks(n, SAMPLE_CHUNK, |c, range| {
        let mut rng = par::stream_rng(seed, c as u64);
        range
            .map(|_| dist.sample(&mut rng) as u8)
            .collect::<Vec<u8>>()
    });
    Word::new(b.alphabet, chunks.concat())
}

fn sample_markov_from(
    mu: &MarkovMeasure,
    initial: &[u8],
    n: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Word> {
    let m = mu.alphabet().size();
    let k = mu.order();
    let rows: Vec<Option<WeightedIndex<f64>>> = (0..mu.state_count())
        .map(|s| WeightedIndex::new(&mu.kernel()[s * m..(s + 1) * m]).ok())
        .collect();
    let mut symbols: Vec<u8> = initial.iter().take(n).copied().collect();
    let mut state = initial[initial.len() - k..]
        .iter()
        .fold(0usize, |acc, &s| acc * m + s as usize);
    while symbols.len() < n {
        let row = rows[state].as_ref().ok_or_else(|| {
            Error::InvalidProbability(format!("state {state} has no outgoing mass"))
        })?;
        let a = row.sample(rng);
        symbols.push(a as u8);
        state = mu.next_state(state, a);
    }
    Word::new(mu.alphabet(), symbols)
}

/// `h(μ‖ν)` for a Markov reference measure `ν`; `+∞` when some
/// `μ`-positive cylinder takes a zero-probability `ν` step.
pub fn relative_entropy(mu: &Measure, nu: &MarkovMeasure) -> Result<f64> {
    mu.check_alphabet(nu.alphabet())?;
    let m = nu.alphabet().size();
    let k_nu = nu.order();
    let mu_markov = mu.as_markov();
    let k_mu = mu_markov.order();
    let depth = k_nu.max(k_mu);
    let masses = mu.block_masses(depth + 1);
    let span_nu = m.pow(k_nu as u32);
    let span_mu = m.pow(k_mu as u32);
    let mut total = 0.0;
    // Both measures are Markov, so h(μ) = −Σ μ(ω) log P_μ(ω_last | ·) over
    // the same blocks and the sum can be taken term by term; identical
    // measures then give exactly 0.
    for (idx, &mass) in masses.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let a = idx % m;
        let head = idx / m;
        let p_nu = nu.transition(head % span_nu, a);
        if p_nu == 0.0 || nu.stationary()[(idx / m) % span_nu] == 0.0 {
            return Ok(f64::INFINITY);
        }
        let p_mu = mu_markov.transition(head % span_mu, a);
        total += mass * (p_mu.ln() - p_nu.ln());
    }
    Ok(total.max(0.0))
}

/// The k-th Markov approximation: same (k+1)-marginals as `μ`.
pub fn markov_approximation(mu: &Measure, k: usize) -> Result<MarkovMeasure> {
    MarkovMeasure::from_blocks(mu.alphabet(), k, &mu.block_masses(k + 1))
}
