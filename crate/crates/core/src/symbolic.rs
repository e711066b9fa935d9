//! Finite words over a finite alphabet and the adapted metric on Σ = Aᴺ.
//!
//! Cylinders are never materialised as point sets; every statement about a
//! cylinder `[ω]` is a statement about the prefix `ω`. Distances are of the
//! form `ψ(ω ∧ τ)` where `ψ` is the product of per-symbol contraction ratios.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack used when comparing a radius against a cylinder weight.
/// `(1/3)·(1/3)` and `1/9` differ in the last bit; the boundary convention
/// `r ≤ ψ(ω|ₙ)` must not depend on that.
pub const WEIGHT_REL_TOL: f64 = 1e-12;

/// Words longer than this have their weights accumulated in log space.
const DIRECT_PRODUCT_MAX_LEN: usize = 64;

/// Finite alphabet `{0, …, m−1}` with `m ≥ 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Alphabet(usize);

impl Alphabet {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::AlphabetTooSmall(size));
        }
        if size > u8::MAX as usize + 1 {
            return Err(Error::InvalidParameter(format!(
                "alphabet of size {size} exceeds 256 symbols"
            )));
        }
        Ok(Self(size))
    }

    pub fn size(self) -> usize {
        self.0
    }

    /// Number of words of length `n`, or `None` on overflow.
    pub fn word_count(self, n: usize) -> Option<usize> {
        self.0.checked_pow(n as u32)
    }

    /// All words of length `n` in lexicographic (big-endian index) order.
    pub fn words(self, n: usize) -> impl Iterator<Item = Word> {
        let total = self.word_count(n).expect("word count overflow");
        (0..total).map(move |idx| Word::from_index(self, idx, n))
    }
}

/// A finite word; the empty word stands for the whole space Σ.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Word {
    alphabet: Alphabet,
    symbols: Vec<u8>,
}

impl Word {
    pub fn new(alphabet: Alphabet, symbols: Vec<u8>) -> Result<Self> {
        if let Some(&s) = symbols.iter().find(|&&s| s as usize >= alphabet.size()) {
            return Err(Error::SymbolOutOfRange {
                symbol: s as usize,
                size: alphabet.size(),
            });
        }
        Ok(Self { alphabet, symbols })
    }

    pub fn empty(alphabet: Alphabet) -> Self {
        Self {
            alphabet,
            symbols: Vec::new(),
        }
    }

    /// Parse a word written as a string of decimal digits, e.g. `"0110"`.
    pub fn parse(alphabet: Alphabet, text: &str) -> Result<Self> {
        let symbols = text
            .chars()
            .map(|c| {
                c.to_digit(10)
                    .map(|d| d as u8)
                    .ok_or_else(|| Error::InvalidParameter(format!("bad symbol {c:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(alphabet, symbols)
    }

    /// The word whose big-endian base-`m` value is `index`, padded to `len`.
    pub fn from_index(alphabet: Alphabet, mut index: usize, len: usize) -> Self {
        let m = alphabet.size();
        let mut symbols = vec![0u8; len];
        for slot in symbols.iter_mut().rev() {
            *slot = (index % m) as u8;
            index /= m;
        }
        Self { alphabet, symbols }
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// `ω|ₙ`. Panics if `n > len`.
    pub fn prefix(&self, n: usize) -> Word {
        Word {
            alphabet: self.alphabet,
            symbols: self.symbols[..n].to_vec(),
        }
    }

    pub fn push(&mut self, symbol: u8) -> Result<()> {
        if symbol as usize >= self.alphabet.size() {
            return Err(Error::SymbolOutOfRange {
                symbol: symbol as usize,
                size: self.alphabet.size(),
            });
        }
        self.symbols.push(symbol);
        Ok(())
    }

    pub fn is_prefix_of(&self, other: &Word) -> bool {
        other.symbols.starts_with(&self.symbols)
    }

    /// Big-endian base-`m` index of the word.
    pub fn index(&self) -> usize {
        let m = self.alphabet.size();
        self.symbols.iter().fold(0, |acc, &s| acc * m + s as usize)
    }
}

impl std::fmt::Display for Word {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.alphabet.size() <= 10 {
            for s in &self.symbols {
                write!(f, "{s}")?;
            }
            Ok(())
        } else {
            let parts: Vec<String> = self.symbols.iter().map(|s| s.to_string()).collect();
            write!(f, "{}", parts.join("."))
        }
    }
}

/// Longest common prefix `ω ∧ τ`.
pub fn common_prefix(a: &Word, b: &Word) -> Result<Word> {
    if a.alphabet != b.alphabet {
        return Err(Error::AlphabetMismatch {
            left: a.alphabet.size(),
            right: b.alphabet.size(),
        });
    }
    let n = a
        .symbols
        .iter()
        .zip(&b.symbols)
        .take_while(|(x, y)| x == y)
        .count();
    Ok(a.prefix(n))
}

/// Per-symbol weights `ψ(i) = λᵢ` of the adapted metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptedMetric {
    ratios: Vec<f64>,
    log_ratios: Vec<f64>,
    gamma: f64,
    gamma_min: f64,
}

impl AdaptedMetric {
    pub fn new(ratios: Vec<f64>) -> Result<Self> {
        Alphabet::new(ratios.len())?;
        for (index, &value) in ratios.iter().enumerate() {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::InvalidRatio { index, value });
            }
        }
        let gamma = ratios.iter().copied().fold(f64::MIN, f64::max);
        let gamma_min = ratios.iter().copied().fold(f64::MAX, f64::min);
        let log_ratios = ratios.iter().map(|r| r.ln()).collect();
        Ok(Self {
            ratios,
            log_ratios,
            gamma,
            gamma_min,
        })
    }

    pub fn alphabet(&self) -> Alphabet {
        Alphabet(self.ratios.len())
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    /// `γ = maxᵢ λᵢ`.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn gamma_min(&self) -> f64 {
        self.gamma_min
    }

    fn check(&self, w: &Word) -> Result<()> {
        if w.alphabet.size() != self.ratios.len() {
            return Err(Error::AlphabetMismatch {
                left: w.alphabet.size(),
                right: self.ratios.len(),
            });
        }
        Ok(())
    }

    /// `ψ(ω) = ∏ λ_{ωⱼ}`; the empty word has weight 1.
    pub fn psi(&self, w: &Word) -> Result<f64> {
        self.check(w)?;
        Ok(self.psi_symbols(w.symbols()))
    }

    pub(crate) fn psi_symbols(&self, symbols: &[u8]) -> f64 {
        if symbols.len() > DIRECT_PRODUCT_MAX_LEN {
            self.log_psi_symbols(symbols).exp()
        } else {
            symbols.iter().map(|&s| self.ratios[s as usize]).product()
        }
    }

    pub fn log_psi(&self, w: &Word) -> Result<f64> {
        self.check(w)?;
        Ok(self.log_psi_symbols(w.symbols()))
    }

    pub(crate) fn log_psi_symbols(&self, symbols: &[u8]) -> f64 {
        symbols.iter().map(|&s| self.log_ratios[s as usize]).sum()
    }

    /// Distance between two truncated infinite words.
    ///
    /// If the truncations agree on their common length the true distance
    /// is only bounded above by `ψ` of the shared prefix, and the result is
    /// marked undecided.
    pub fn distance(&self, a: &Word, b: &Word) -> Result<Distance> {
        self.check(a)?;
        let shared = common_prefix(a, b)?;
        let decided = shared.len() < a.len().min(b.len());
        Ok(Distance {
            value: self.psi_symbols(shared.symbols()),
            decided,
        })
    }

    /// Depth `n ≥ 1` with `ψ(ω|ₙ₊₁) < r ≤ ψ(ω|ₙ)`, so that
    /// `[ω|ₙ₊₁] ⊂ B(ω, r) ⊂ [ω|ₙ]`.
    pub fn ball_depth(&self, w: &Word, r: f64) -> Result<BallDepth> {
        self.check(w)?;
        if !(r > 0.0) || r >= self.gamma_min {
            return Err(Error::RadiusTooLarge {
                r,
                threshold: self.gamma_min,
            });
        }
        // A = maxᵢ ψ(i); equals γ for per-symbol weights, so B = 0 here.
        let a = self.ratios.iter().copied().fold(f64::MIN, f64::max);
        let offset = 1.0 - a.ln() / self.gamma.ln();
        let max_depth = r.ln() / self.gamma.ln() + offset;
        let certified = (max_depth + 1e-9).floor() as usize;
        let mut weight = 1.0;
        for (n, &s) in w.symbols().iter().enumerate() {
            let next = weight * self.ratios[s as usize];
            // weight = ψ(ω|ₙ), next = ψ(ω|ₙ₊₁)
            if n >= 1 && r <= weight * (1.0 + WEIGHT_REL_TOL) && next < r * (1.0 - WEIGHT_REL_TOL) {
                return Ok(BallDepth {
                    depth: n,
                    max_depth: certified,
                    offset,
                });
            }
            weight = next;
        }
        Err(Error::WordTooShort {
            required: certified + 1,
            actual: w.len(),
        })
    }
}

/// Result of [`AdaptedMetric::distance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distance {
    /// Exact distance when `decided`, otherwise an upper bound.
    pub value: f64,
    pub decided: bool,
}

/// Result of [`AdaptedMetric::ball_depth`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallDepth {
    pub depth: usize,
    /// Certified bound `⌊log r / log γ + B⌋` on the depth.
    pub max_depth: usize,
    /// The constant `B = 1 − log(maxᵢ λᵢ)/log γ` used in the bound.
    pub offset: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn binary() -> Alphabet {
        Alphabet::new(2).unwrap()
    }

    fn w(text: &str) -> Word {
        Word::parse(binary(), text).unwrap()
    }

    #[test]
    fn common_prefix_examples() {
        assert_eq!(common_prefix(&w("0110"), &w("0111")).unwrap(), w("011"));
        assert!(common_prefix(&w("0"), &w("1")).unwrap().is_empty());
        assert_eq!(common_prefix(&w("00"), &w("001")).unwrap(), w("00"));
    }

    #[test]
    fn common_prefix_alphabet_mismatch() {
        let t = Word::parse(Alphabet::new(3).unwrap(), "0").unwrap();
        assert!(matches!(
            common_prefix(&w("0"), &t),
            Err(Error::AlphabetMismatch { .. })
        ));
    }

    #[test]
    fn unary_alphabet_rejected() {
        assert_eq!(Alphabet::new(1), Err(Error::AlphabetTooSmall(1)));
    }

    #[test]
    fn psi_examples() {
        let third = AdaptedMetric::new(vec![1.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert_eq!(third.psi(&Word::empty(binary())).unwrap(), 1.0);
        assert!((third.psi(&w("01")).unwrap() - 1.0 / 9.0).abs() < 1e-16);
        let m = AdaptedMetric::new(vec![0.5, 0.25]).unwrap();
        assert_eq!(m.psi(&w("001")).unwrap(), 1.0 / 16.0);
    }

    #[test]
    fn long_words_use_log_space() {
        let m = AdaptedMetric::new(vec![0.5, 0.5]).unwrap();
        let long = Word::new(binary(), vec![0; 200]).unwrap();
        let v = m.psi(&long).unwrap();
        assert!((v / 0.5f64.powi(200) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distance_examples() {
        let third = AdaptedMetric::new(vec![1.0 / 3.0, 1.0 / 3.0]).unwrap();
        let d = third.distance(&w("0111"), &w("10")).unwrap();
        assert_eq!(
            d,
            Distance {
                value: 1.0,
                decided: true
            }
        );
        let half = AdaptedMetric::new(vec![0.5, 0.5]).unwrap();
        let d = half.distance(&w("001"), &w("000")).unwrap();
        assert_eq!(
            d,
            Distance {
                value: 0.25,
                decided: true
            }
        );
        let d = half.distance(&w("00"), &w("00")).unwrap();
        assert_eq!(
            d,
            Distance {
                value: 0.25,
                decided: false
            }
        );
    }

    #[test]
    fn ball_depth_examples() {
        let third = AdaptedMetric::new(vec![1.0 / 3.0, 1.0 / 3.0]).unwrap();
        let zeros = Word::new(binary(), vec![0; 10]).unwrap();
        assert_eq!(third.ball_depth(&zeros, 0.2).unwrap().depth, 1);
        assert_eq!(third.ball_depth(&zeros, 1.0 / 9.0).unwrap().depth, 2);
        let half = AdaptedMetric::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(half.ball_depth(&w("0110101"), 0.3).unwrap().depth, 1);
    }

    #[test]
    fn ball_depth_errors() {
        let third = AdaptedMetric::new(vec![1.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert!(matches!(
            third.ball_depth(&w("0000"), 0.5),
            Err(Error::RadiusTooLarge { .. })
        ));
        match third.ball_depth(&w("00"), 1e-3) {
            Err(Error::WordTooShort { required, actual }) => {
                assert_eq!(actual, 2);
                assert!(required > 6);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ultrametric_bound_exhaustive() {
        // all decided triples of words of length 4 over a 3-letter alphabet
        let a = Alphabet::new(3).unwrap();
        let m = AdaptedMetric::new(vec![0.2, 0.3, 0.45]).unwrap();
        let words: Vec<Word> = a.words(4).collect();
        for x in &words {
            for y in &words {
                let dxy = m.distance(x, y).unwrap();
                for z in &words {
                    let dxz = m.distance(x, z).unwrap();
                    let dzy = m.distance(z, y).unwrap();
                    if dxy.decided && dxz.decided && dzy.decided {
                        assert!(dxy.value <= dxz.value.max(dzy.value) * (1.0 + 1e-15));
                    }
                }
            }
        }
    }

    #[test]
    fn ball_cylinder_inclusions_brute_force() {
        let a = Alphabet::new(3).unwrap();
        let m = AdaptedMetric::new(vec![0.3, 0.25, 0.2]).unwrap();
        for base in a.words(7).step_by(97) {
            for &r in &[0.15, 0.06, 0.02, 0.011] {
                let Ok(bd) = m.ball_depth(&base, r) else {
                    continue;
                };
                let n = bd.depth;
                assert!(n <= bd.max_depth);
                for tau in a.words(n + 2) {
                    let d = m.distance(&base.prefix(n + 2), &tau).unwrap();
                    if base.prefix(n + 1).is_prefix_of(&tau) {
                        // [ω|ₙ₊₁] ⊂ B(ω, r)
                        assert!(d.value < r);
                    }
                    if d.decided && d.value < r {
                        // B(ω, r) ⊂ [ω|ₙ]
                        assert!(base.prefix(n).is_prefix_of(&tau));
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn psi_strictly_decreasing_under_extension(
            ratios in proptest::collection::vec(0.01f64..0.99, 2..5),
            symbols in proptest::collection::vec(0u8..2, 0..80),
            next in 0u8..2,
        ) {
            let m = AdaptedMetric::new(ratios).unwrap();
            let mut word = Word::new(m.alphabet(), symbols).unwrap();
            let before = m.psi(&word).unwrap();
            word.push(next).unwrap();
            let after = m.psi(&word).unwrap();
            prop_assert!(after <= m.gamma() * before * (1.0 + 1e-12));
            prop_assert!(after < before);
        }

        #[test]
        fn ball_depth_respects_bound(r in 1e-6f64..0.19, symbols in proptest::collection::vec(0u8..2, 40)) {
            let m = AdaptedMetric::new(vec![0.2, 0.45]).unwrap();
            let word = Word::new(m.alphabet(), symbols).unwrap();
            let bd = m.ball_depth(&word, r).unwrap();
            prop_assert!(bd.depth >= 1 && bd.depth <= bd.max_depth);
            let s = word.symbols();
            prop_assert!(m.psi_symbols(&s[..bd.depth + 1]) < r);
            prop_assert!(r <= m.psi_symbols(&s[..bd.depth]) * (1.0 + WEIGHT_REL_TOL));
        }
    }
}
