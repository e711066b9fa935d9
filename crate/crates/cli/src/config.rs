//! Experiment configuration: one versioned JSON document, unknown keys
//! rejected everywhere.

use fractdim::ifs::{InfiniteWord, SimilarityIfs, SimilarityMap};
use fractdim::measures::{BernoulliMeasure, GibbsMeasure, MarkovMeasure, Measure, Potential};
use fractdim::symbolic::Alphabet;
use fractdim::{Error, Result};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub version: u32,
    pub seed: u64,
    pub experiment: Experiment,
    pub ifs: Option<IfsSpec>,
    pub measure: Option<MeasureSpec>,
    #[serde(default)]
    pub assertions: Vec<Assertion>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct IfsSpec {
    pub maps: Vec<MapSpec>,
}

/// `x ↦ ratio · O x + translation`; `O` is the identity unless a planar
/// rotation angle or an explicit row-major matrix is given.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub ratio: f64,
    pub translation: Vec<f64>,
    pub rotation: Option<f64>,
    pub orthogonal: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureSpec {
    Bernoulli(Vec<f64>),
    Markov(MarkovSpec),
    Potential(PotentialSpec),
}

/// Kernel rows are indexed by the last `order` symbols, row-major.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovSpec {
    pub alphabet: usize,
    pub order: usize,
    pub kernel: Vec<f64>,
}

/// Values of a locally constant potential on words of length `depth`;
/// `null` marks a forbidden block.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub alphabet: usize,
    pub depth: usize,
    pub table: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Spectrum(SpectrumSpec),
    Dimension(DimensionSpec),
    Project(ProjectSpec),
    Ede(EdeSpec),
    Transversality(TransversalitySpec),
    Approx(ApproxSpec),
    Gibbs(GibbsSpec),
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSpec {
    pub q_grid: Option<GridSpec>,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

/// Radii `r0·2^{−j}` fitted over `lo ≤ j ≤ hi`.
#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    #[serde(default = "one")]
    pub r0: f64,
    pub lo: usize,
    pub hi: usize,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionSpec {
    pub points: usize,
    #[serde(default = "default_tol")]
    pub sample_tol: f64,
    #[serde(default = "default_pairs")]
    pub max_pairs: u64,
    pub box_counting: Option<WindowSpec>,
    pub correlation: Option<WindowSpec>,
    /// Exponents `s` at which to evaluate the empirical energy.
    #[serde(default)]
    pub energy: Vec<f64>,
    pub coarse: Option<CoarseSpec>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CoarseSpec {
    pub r: f64,
    #[serde(default)]
    pub method: CoarseMethodSpec,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarseMethodSpec {
    #[default]
    Moments,
    LevelSets,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectSpec {
    pub d: usize,
    pub directions: usize,
    pub points: usize,
    pub tolerance: f64,
    pub window: WindowSpec,
    #[serde(default = "default_pairs")]
    pub max_pairs: u64,
    #[serde(default = "default_tol")]
    pub sample_tol: f64,
    /// Rows spanning an extra subspace reported on its own.
    pub planted: Option<Vec<Vec<f64>>>,
}

/// The infinite word `prefix` followed by `period` repeated forever.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct WordSpec {
    #[serde(default)]
    pub prefix: Vec<u8>,
    pub period: Vec<u8>,
}

impl WordSpec {
    pub fn build(&self) -> Result<InfiniteWord> {
        InfiniteWord::new(self.prefix.clone(), self.period.clone())
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EdeSpec {
    /// First and last depth, inclusive.
    pub depths: [usize; 2],
    pub epsilon: f64,
    #[serde(default)]
    pub words: Vec<WordSpec>,
    /// Extra words: prefixes of this length sampled from the measure,
    /// followed by the constant tail 0.
    #[serde(default)]
    pub random_words: usize,
    #[serde(default = "default_word_length")]
    pub word_length: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_refine")]
    pub refine: f64,
    pub constant: Option<f64>,
    pub holder: Option<HolderSpec>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct HolderSpec {
    pub alphas: Vec<f64>,
    pub base_points: usize,
    pub depth: usize,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TransversalitySpec {
    /// Every translation coordinate ranges over `[lower, upper]`.
    pub lower: f64,
    pub upper: f64,
    pub omega: WordSpec,
    pub tau: WordSpec,
    pub samples: usize,
    /// Decreasing radii; `2^{-1} … 2^{-16}` when absent.
    pub radii: Option<Vec<f64>>,
    #[serde(default = "default_min_hits")]
    pub min_hits: u64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxSpec {
    pub orders: Vec<usize>,
    /// Also round each approximation's kernel to multiples of `1/D`.
    pub denominator: Option<u64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GibbsSpec {
    pub max_len: usize,
}

/// A declared expectation on a named metric: either `expected ± tolerance`
/// or bounds `min`/`max`.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Assertion {
    pub metric: String,
    pub expected: Option<f64>,
    pub tolerance: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn default_tol() -> f64 {
    1e-12
}

fn default_pairs() -> u64 {
    10_000_000
}

fn default_word_length() -> usize {
    40
}

fn default_refine() -> f64 {
    1e-6
}

fn default_min_hits() -> u64 {
    50
}

/// Library objects built from a validated config.
pub struct Setup {
    pub ifs: Option<SimilarityIfs>,
    pub measure: Option<Measure>,
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Spectrum(_) => "spectrum",
            Experiment::Dimension(_) => "dimension",
            Experiment::Project(_) => "project",
            Experiment::Ede(_) => "ede",
            Experiment::Transversality(_) => "transversality",
            Experiment::Approx(_) => "approx",
            Experiment::Gibbs(_) => "gibbs",
        }
    }

    fn needs_ifs(&self) -> bool {
        !matches!(self, Experiment::Approx(_) | Experiment::Gibbs(_))
    }

    fn needs_measure(&self) -> bool {
        !matches!(self, Experiment::Ede(_) | Experiment::Transversality(_))
    }

    /// Every metric the experiment reports, in output order.
    pub fn metric_names(&self) -> Vec<String> {
        let fixed = |names: &[&str]| names.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        match self {
            Experiment::Spectrum(_) => fixed(&[
                "s0",
                "alpha_min",
                "alpha_max",
                "alpha0",
                "t_at_0",
                "t_at_1",
                "symbolic_dimension",
                "degenerate",
            ]),
            Experiment::Dimension(d) => {
                let mut names = fixed(&["symbolic_dimension", "predicted_dimension"]);
                if d.box_counting.is_some() {
                    names.extend(fixed(&["box_dimension", "box_stderr"]));
                }
                if d.correlation.is_some() {
                    names.extend(fixed(&["correlation_dimension", "correlation_stderr"]));
                }
                for i in 0..d.energy.len() {
                    names.push(format!("energy[{i}]"));
                    names.push(format!("energy_divergent[{i}]"));
                }
                if d.coarse.is_some() {
                    names.extend(fixed(&["coarse_peak_alpha", "coarse_peak_f"]));
                }
                names
            }
            Experiment::Project(p) => {
                let mut names = fixed(&["predicted", "fraction_within", "median", "failures"]);
                if p.planted.is_some() {
                    names.extend(fixed(&["planted_estimate", "planted_below"]));
                }
                names
            }
            Experiment::Ede(e) => {
                let mut names = fixed(&[
                    "words",
                    "passing_words",
                    "all_pass",
                    "overlap_suspected",
                    "worst_exponent",
                ]);
                if e.holder.is_some() {
                    names.extend(fixed(&["holder_pass", "holder_skipped"]));
                }
                names
            }
            Experiment::Transversality(_) => fixed(&[
                "exponent",
                "exponent_stderr",
                "k_hat",
                "degenerate",
                "constraint_violated",
            ]),
            Experiment::Approx(a) => {
                let mut names = fixed(&["entropy"]);
                for i in 0..a.orders.len() {
                    names.push(format!("relative_entropy[{i}]"));
                }
                if a.denominator.is_some() {
                    for i in 0..a.orders.len() {
                        names.push(format!("rational_relative_entropy[{i}]"));
                    }
                }
                names
            }
            Experiment::Gibbs(_) => fixed(&["pressure", "log_constant", "max_log_ratio", "holds"]),
        }
    }
}

impl Config {
    /// Structural checks that need no numerics; failures are schema
    /// errors, reported with the offending field.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.version != SCHEMA_VERSION {
            return Err(format!(
                "version: unsupported schema version {}, expected {SCHEMA_VERSION}",
                self.version
            ));
        }
        let kind = self.experiment.kind();
        if self.experiment.needs_ifs() && self.ifs.is_none() {
            return Err(format!("ifs: required by experiment `{kind}`"));
        }
        if self.experiment.needs_measure() && self.measure.is_none() {
            return Err(format!("measure: required by experiment `{kind}`"));
        }
        match (&self.experiment, &self.measure) {
            (Experiment::Spectrum(_), Some(m)) if !matches!(m, MeasureSpec::Bernoulli(_)) => {
                return Err("measure: experiment `spectrum` takes bernoulli weights".into());
            }
            (Experiment::Gibbs(_), Some(m)) if !matches!(m, MeasureSpec::Potential(_)) => {
                return Err("measure: experiment `gibbs` takes a potential table".into());
            }
            _ => {}
        }
        if let Some(ifs) = &self.ifs {
            for (i, m) in ifs.maps.iter().enumerate() {
                if m.rotation.is_some() && m.orthogonal.is_some() {
                    return Err(format!(
                        "ifs.maps[{i}]: give either `rotation` or `orthogonal`, not both"
                    ));
                }
            }
        }
        let known = self.experiment.metric_names();
        for (i, a) in self.assertions.iter().enumerate() {
            if !known.contains(&a.metric) {
                return Err(format!(
                    "assertions[{i}].metric: unknown metric `{}` for experiment `{kind}`; known: {}",
                    a.metric,
                    known.join(", ")
                ));
            }
            match (a.expected, a.min, a.max) {
                (Some(_), None, None) => {}
                (None, lo, hi) if lo.is_some() || hi.is_some() => {
                    if a.tolerance.is_some() {
                        return Err(format!(
                            "assertions[{i}].tolerance: only meaningful with `expected`"
                        ));
                    }
                }
                _ => {
                    return Err(format!(
                        "assertions[{i}]: give `expected` (with optional `tolerance`) or `min`/`max`"
                    ));
                }
            }
        }
        Ok(())
    }

    /// Build the IFS and measure, range-checking every field through the
    /// library constructors.
    pub fn build(&self) -> Result<Setup> {
        let ifs = self.ifs.as_ref().map(build_ifs).transpose()?;
        let measure = self.measure.as_ref().map(build_measure).transpose()?;
        if let (Some(f), Some(m)) = (&ifs, &measure) {
            let (left, right) = (f.alphabet().size(), m.alphabet().size());
            if left != right {
                return Err(Error::AlphabetMismatch { left, right });
            }
        }
        check_experiment(&self.experiment)?;
        Ok(Setup { ifs, measure })
    }
}

fn build_ifs(spec: &IfsSpec) -> Result<SimilarityIfs> {
    let mut maps = Vec::with_capacity(spec.maps.len());
    for m in &spec.maps {
        let mut map = SimilarityMap::scaled(m.ratio, m.translation.clone());
        if let Some(t) = m.rotation {
            if m.translation.len() != 2 {
                return Err(Error::InvalidParameter(
                    "a rotation angle needs a planar map".into(),
                ));
            }
            map.orthogonal = vec![t.cos(), -t.sin(), t.sin(), t.cos()];
        }
        if let Some(rows) = &m.orthogonal {
            map.orthogonal = rows.concat();
        }
        maps.push(map);
    }
    if maps.is_empty() {
        return Err(Error::AlphabetTooSmall(0));
    }
    SimilarityIfs::new(maps)
}

fn build_measure(spec: &MeasureSpec) -> Result<Measure> {
    Ok(match spec {
        MeasureSpec::Bernoulli(p) => BernoulliMeasure::new(p.clone())?.into(),
        MeasureSpec::Markov(m) => {
            MarkovMeasure::from_kernel(Alphabet::new(m.alphabet)?, m.order, m.kernel.clone())?
                .into()
        }
        MeasureSpec::Potential(p) => {
            let table = p
                .table
                .iter()
                .map(|v| v.unwrap_or(f64::NEG_INFINITY))
                .collect();
            let potential = Potential::new(Alphabet::new(p.alphabet)?, p.depth, table)?;
            GibbsMeasure::from_potential(potential)?.into()
        }
    })
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} = {x} must be positive"
        )))
    }
}

fn nonzero(name: &str, n: usize) -> Result<()> {
    if n > 0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be at least 1"
        )))
    }
}

/// Ranges the library only discovers mid-run are checked up front.
fn check_experiment(e: &Experiment) -> Result<()> {
    match e {
        Experiment::Spectrum(s) => {
            if let Some(g) = s.q_grid {
                fractdim::multifractal::QGrid {
                    lo: g.lo,
                    hi: g.hi,
                    step: g.step,
                }
                .points()?;
            }
        }
        Experiment::Dimension(d) => {
            nonzero("points", d.points)?;
            positive("sample_tol", d.sample_tol)?;
            for w in d.box_counting.iter().chain(&d.correlation) {
                fractdim::dimest::RadiusSchedule::new(w.r0, w.hi, (w.lo, w.hi))?;
            }
            if let Some(c) = &d.coarse {
                positive("coarse.r", c.r)?;
            }
            if let Some(s) = d.energy.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
                return Err(Error::InvalidParameter(format!(
                    "energy exponent s = {s} must be nonnegative"
                )));
            }
        }
        Experiment::Project(p) => {
            nonzero("points", p.points)?;
            nonzero("directions", p.directions)?;
            positive("tolerance", p.tolerance)?;
            positive("sample_tol", p.sample_tol)?;
            fractdim::dimest::RadiusSchedule::new(
                p.window.r0,
                p.window.hi,
                (p.window.lo, p.window.hi),
            )?;
        }
        Experiment::Ede(e) => {
            let [lo, hi] = e.depths;
            if lo == 0 || lo > hi {
                return Err(Error::InvalidParameter(format!(
                    "depths [{lo}, {hi}] must satisfy 1 ≤ first ≤ last"
                )));
            }
            if !(e.epsilon >= 0.0 && e.epsilon.is_finite()) {
                return Err(Error::InvalidParameter("ε must be nonnegative".into()));
            }
            if e.words.is_empty() && e.random_words == 0 {
                return Err(Error::InvalidParameter(
                    "give at least one word or a positive random_words".into(),
                ));
            }
            for w in &e.words {
                w.build()?;
            }
            if let Some(h) = &e.holder {
                nonzero("holder.base_points", h.base_points)?;
                nonzero("holder.depth", h.depth)?;
            }
        }
        Experiment::Transversality(t) => {
            nonzero("samples", t.samples)?;
            t.omega.build()?;
            t.tau.build()?;
        }
        Experiment::Approx(a) => {
            if a.orders.is_empty() {
                return Err(Error::InvalidParameter("orders must not be empty".into()));
            }
            if a.denominator == Some(0) {
                return Err(Error::InvalidParameter(
                    "denominator must be at least 1".into(),
                ));
            }
        }
        Experiment::Gibbs(g) => nonzero("max_len", g.max_len)?,
    }
    Ok(())
}
