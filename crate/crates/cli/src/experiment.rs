//! Dispatch from a config to the library and collection of tables and
//! metrics.

use fractdim::csv::Table;
use fractdim::dimest::{
    box_counting, coarse_spectrum, correlation_dimension, empirical_energy, CoarseMethod,
    CoarseSettings, PairSettings, RadiusSchedule,
};
use fractdim::ifs::{InfiniteWord, SimilarityIfs, TranslationFamily, TransversalitySettings};
use fractdim::measures::{markov_approximation, relative_entropy, BernoulliMeasure, Measure};
use fractdim::multifractal::{QGrid, SpectrumProblem};
use fractdim::projections::{
    ede_check, holder_inverse_check, marstrand_experiment, EdeSettings, HolderSettings,
    MarstrandSettings, Subspace,
};
use fractdim::{par, row, Error, Result};

use crate::config::{
    ApproxSpec, CoarseMethodSpec, Config, DimensionSpec, EdeSpec, Experiment, GibbsSpec,
    ProjectSpec, Setup, SpectrumSpec, TransversalitySpec, WindowSpec,
};

/// Tables to write, keyed by file stem, and named scalar results.
pub struct Outcome {
    pub tables: Vec<(&'static str, Table)>,
    pub metrics: Vec<(String, f64)>,
}

impl Outcome {
    fn new() -> Self {
        Self {
            tables: Vec::new(),
            metrics: Vec::new(),
        }
    }

    fn metric(&mut self, name: impl Into<String>, value: impl Into<Metric>) {
        self.metrics.push((name.into(), value.into().0));
    }
}

struct Metric(f64);

impl From<f64> for Metric {
    fn from(x: f64) -> Self {
        Metric(x)
    }
}

impl From<usize> for Metric {
    fn from(x: usize) -> Self {
        Metric(x as f64)
    }
}

impl From<u64> for Metric {
    fn from(x: u64) -> Self {
        Metric(x as f64)
    }
}

impl From<bool> for Metric {
    fn from(x: bool) -> Self {
        Metric(f64::from(u8::from(x)))
    }
}

/// Seeds of the independent random streams of one run.
const CLOUD_STREAM: u64 = 0;
const PAIR_STREAM: u64 = 1;
const WORD_STREAM: u64 = 2;

pub fn run(config: &Config, setup: &Setup, seed: u64) -> Result<Outcome> {
    let ifs = || setup.ifs.as_ref().expect("validated: ifs present");
    let measure = || setup.measure.as_ref().expect("validated: measure present");
    let out = match &config.experiment {
        Experiment::Spectrum(s) => spectrum(s, ifs(), measure())?,
        Experiment::Dimension(d) => dimension(d, ifs(), measure(), seed)?,
        Experiment::Project(p) => project(p, ifs(), measure(), seed)?,
        Experiment::Ede(e) => ede(e, ifs(), setup.measure.as_ref(), seed)?,
        Experiment::Transversality(t) => transversality(t, ifs(), seed)?,
        Experiment::Approx(a) => approx(a, measure())?,
        Experiment::Gibbs(g) => gibbs(g, measure())?,
    };
    debug_assert_eq!(
        out.metrics
            .iter()
            .map(|(n, _)| n.clone())
            .collect::<Vec<_>>(),
        config.experiment.metric_names()
    );
    Ok(out)
}

fn spectrum(spec: &SpectrumSpec, ifs: &SimilarityIfs, mu: &Measure) -> Result<Outcome> {
    let p = match mu {
        Measure::Bernoulli(b) => b.probabilities().to_vec(),
        _ => unreachable!("validated: bernoulli weights"),
    };
    let problem = SpectrumProblem::new(p, ifs.ratios().to_vec())?;
    let grid = spec.q_grid.map_or_else(QGrid::default, |g| QGrid {
        lo: g.lo,
        hi: g.hi,
        step: g.step,
    });
    let curve = problem.spectrum_curve(&grid)?;
    let mut out = Outcome::new();
    out.metric("s0", curve.s0);
    out.metric("alpha_min", curve.alpha_min);
    out.metric("alpha_max", curve.alpha_max);
    out.metric("alpha0", curve.alpha0);
    out.metric("t_at_0", problem.solve_t(0.0)?);
    out.metric("t_at_1", problem.solve_t(1.0)?);
    out.metric("symbolic_dimension", ifs.symbolic_dimension(mu)?);
    out.metric("degenerate", curve.degenerate);
    out.tables.push(("spectrum", curve.to_table()));
    Ok(out)
}

fn schedule(w: &WindowSpec) -> Result<RadiusSchedule> {
    RadiusSchedule::new(w.r0, w.hi, (w.lo, w.hi))
}

fn dimension(
    spec: &DimensionSpec,
    ifs: &SimilarityIfs,
    mu: &Measure,
    seed: u64,
) -> Result<Outcome> {
    let cloud = ifs.sample_points(
        mu,
        spec.points,
        spec.sample_tol,
        par::derive_seed(seed, CLOUD_STREAM),
    )?;
    let pairs = PairSettings {
        max_pairs: spec.max_pairs,
        seed: par::derive_seed(seed, PAIR_STREAM),
    };
    let mut out = Outcome::new();
    out.metric("symbolic_dimension", ifs.symbolic_dimension(mu)?);
    out.metric(
        "predicted_dimension",
        ifs.predicted_projection_dimension(mu, ifs.dim())?,
    );
    let mut estimates = Table::new(&[
        "estimator",
        "parameter",
        "value",
        "stderr",
        "window_lo",
        "window_hi",
        "divergent",
        "seed",
    ]);
    let mut scales = Table::new(&["estimator", "radius", "value"]);
    let push = |t: &mut Table, cells| t.push(cells).expect("fixed width");
    if let Some(w) = &spec.box_counting {
        let b = box_counting(&cloud, &schedule(w)?)?;
        push(
            &mut estimates,
            row![
                "box",
                f64::NAN,
                b.fit.slope,
                b.fit.stderr,
                w.lo,
                w.hi,
                false,
                seed
            ],
        );
        for (r, c) in b.radii.iter().zip(&b.counts) {
            push(&mut scales, row!["box", *r, *c as f64]);
        }
        out.metric("box_dimension", b.fit.slope);
        out.metric("box_stderr", b.fit.stderr);
    }
    if let Some(w) = &spec.correlation {
        let c = correlation_dimension(&cloud, &schedule(w)?, &pairs)?;
        push(
            &mut estimates,
            row![
                "correlation",
                f64::NAN,
                c.fit.slope,
                c.fit.stderr,
                w.lo,
                w.hi,
                false,
                seed
            ],
        );
        for (r, s) in c.sum.radii.iter().zip(&c.sum.sums) {
            push(&mut scales, row!["correlation", *r, *s]);
        }
        out.metric("correlation_dimension", c.fit.slope);
        out.metric("correlation_stderr", c.fit.stderr);
    }
    for (i, &s) in spec.energy.iter().enumerate() {
        let e = empirical_energy(&cloud, s, &pairs)?;
        push(
            &mut estimates,
            row![
                "energy",
                s,
                e.value,
                f64::NAN,
                0usize,
                0usize,
                e.divergent,
                seed
            ],
        );
        out.metric(format!("energy[{i}]"), e.value);
        out.metric(format!("energy_divergent[{i}]"), e.divergent);
    }
    if let Some(c) = &spec.coarse {
        let mut settings = CoarseSettings::new(c.r);
        settings.method = match c.method {
            CoarseMethodSpec::Moments => CoarseMethod::Moments,
            CoarseMethodSpec::LevelSets => CoarseMethod::LevelSets,
        };
        let spectrum = coarse_spectrum(&cloud, &settings)?;
        push(
            &mut estimates,
            row![
                "coarse_peak",
                c.r,
                spectrum.peak.alpha,
                f64::NAN,
                0usize,
                0usize,
                false,
                seed
            ],
        );
        let mut curve = Table::new(&["q", "alpha", "f"]);
        for p in &spectrum.curve {
            push(&mut curve, row![p.q.unwrap_or(f64::NAN), p.alpha, p.f]);
        }
        out.metric("coarse_peak_alpha", spectrum.peak.alpha);
        out.metric("coarse_peak_f", spectrum.peak.f);
        out.tables.push(("coarse", curve));
    }
    out.tables.insert(0, ("dimension", estimates));
    out.tables.insert(1, ("scales", scales));
    Ok(out)
}

fn project(spec: &ProjectSpec, ifs: &SimilarityIfs, mu: &Measure, seed: u64) -> Result<Outcome> {
    let planted = spec
        .planted
        .as_ref()
        .map(|rows| Subspace::new(ifs.dim(), rows))
        .transpose()?;
    let settings = MarstrandSettings {
        d: spec.d,
        directions: spec.directions,
        points: spec.points,
        tolerance: spec.tolerance,
        schedule: schedule(&spec.window)?,
        max_pairs: spec.max_pairs,
        sample_tol: spec.sample_tol,
        seed,
        planted,
    };
    let r = marstrand_experiment(ifs, mu, &settings)?;
    let mut out = Outcome::new();
    out.metric("predicted", r.predicted);
    out.metric("fraction_within", r.fraction_within);
    out.metric("median", r.quantiles[2]);
    out.metric("failures", r.failures);
    if let Some(p) = &r.planted {
        out.metric("planted_estimate", p.estimate);
        out.metric("planted_below", p.below);
    }
    out.tables.push(("projections", r.to_table()));
    Ok(out)
}

fn ede(spec: &EdeSpec, ifs: &SimilarityIfs, mu: Option<&Measure>, seed: u64) -> Result<Outcome> {
    let uniform: Measure;
    let mu = match mu {
        Some(m) => m,
        None => {
            uniform = BernoulliMeasure::uniform(ifs.alphabet().size())?.into();
            &uniform
        }
    };
    let mut words = spec
        .words
        .iter()
        .map(|w| w.build())
        .collect::<Result<Vec<_>>>()?;
    let word_seed = par::derive_seed(seed, WORD_STREAM);
    for i in 0..spec.random_words {
        let w = mu.sample_word(spec.word_length, par::derive_seed(word_seed, i as u64))?;
        words.push(InfiniteWord::new(w.symbols().to_vec(), vec![0])?);
    }
    let settings = EdeSettings {
        tol: spec.tol,
        refine: spec.refine,
        constant: spec.constant,
    };
    let [lo, hi] = spec.depths;
    let reports = par::map_indexed(words.len(), |i| {
        ede_check(ifs, &words[i], lo..=hi, spec.epsilon, &settings)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(&["word", "depth", "dist_lower", "diam", "epsilon", "pass"]);
    for (i, r) in reports.iter().enumerate() {
        for row in &r.rows {
            table
                .push(row![
                    i,
                    row.depth,
                    row.dist_lower,
                    row.diam,
                    row.epsilon,
                    row.pass
                ])
                .expect("six columns");
        }
    }
    let passing = reports.iter().filter(|r| r.all_pass()).count();
    let mut out = Outcome::new();
    out.metric("words", words.len());
    out.metric("passing_words", passing);
    out.metric("all_pass", passing == words.len());
    out.metric(
        "overlap_suspected",
        reports.iter().filter(|r| r.overlap_suspected).count(),
    );
    out.metric(
        "worst_exponent",
        reports
            .iter()
            .map(|r| r.worst_exponent)
            .fold(f64::NEG_INFINITY, f64::max),
    );
    out.tables.push(("ede", table));
    if let Some(h) = &spec.holder {
        let settings = HolderSettings {
            base_points: h.base_points,
            depth: h.depth,
            tol: spec.tol,
            seed: par::derive_seed(seed, WORD_STREAM + 1),
        };
        let r = holder_inverse_check(ifs, mu, &h.alphas, &settings)?;
        out.metric("holder_pass", r.passes());
        out.metric("holder_skipped", r.skipped.last().copied().unwrap_or(0));
        out.tables.push(("holder", r.to_table()));
    }
    Ok(out)
}

fn transversality(spec: &TransversalitySpec, ifs: &SimilarityIfs, seed: u64) -> Result<Outcome> {
    let family = TranslationFamily::cube(ifs.clone(), spec.lower, spec.upper)?;
    let mut settings = TransversalitySettings {
        samples: spec.samples,
        seed,
        min_hits: spec.min_hits,
        ..TransversalitySettings::default()
    };
    if let Some(radii) = &spec.radii {
        settings.radii = radii.clone();
    }
    let r = family.transversality_exponent(&spec.omega.build()?, &spec.tau.build()?, &settings)?;
    let mut table = Table::new(&["radius", "hits", "measure", "used"]);
    for i in 0..r.radii.len() {
        table
            .push(row![r.radii[i], r.hits[i], r.measure[i], r.used[i]])
            .expect("four columns");
    }
    let mut out = Outcome::new();
    out.metric("exponent", r.fit.map_or(f64::NAN, |f| f.slope));
    out.metric("exponent_stderr", r.fit.map_or(f64::NAN, |f| f.stderr));
    out.metric("k_hat", r.k_hat);
    out.metric("degenerate", r.degenerate);
    out.metric("constraint_violated", r.constraint_violated);
    out.tables.push(("transversality", table));
    Ok(out)
}

fn approx(spec: &ApproxSpec, mu: &Measure) -> Result<Outcome> {
    let mut table = Table::new(&[
        "order",
        "entropy",
        "relative_entropy",
        "rational_relative_entropy",
    ]);
    let mut exact = Vec::new();
    let mut rational = Vec::new();
    for &k in &spec.orders {
        let nu = markov_approximation(mu, k)?;
        let h = relative_entropy(mu, &nu)?;
        let hr = match spec.denominator {
            Some(d) => relative_entropy(mu, &nu.rational_approx(d)?)?,
            None => f64::NAN,
        };
        table
            .push(row![k, nu.entropy(), h, hr])
            .expect("four columns");
        exact.push(h);
        rational.push(hr);
    }
    let mut out = Outcome::new();
    out.metric("entropy", mu.entropy());
    for (i, h) in exact.into_iter().enumerate() {
        out.metric(format!("relative_entropy[{i}]"), h);
    }
    if spec.denominator.is_some() {
        for (i, h) in rational.into_iter().enumerate() {
            out.metric(format!("rational_relative_entropy[{i}]"), h);
        }
    }
    out.tables.push(("approx", table));
    Ok(out)
}

fn gibbs(spec: &GibbsSpec, mu: &Measure) -> Result<Outcome> {
    let g = match mu {
        Measure::Gibbs(g) => g,
        _ => return Err(Error::InvalidParameter("gibbs needs a potential".into())),
    };
    let r = g.verify_inequality(spec.max_len)?;
    let mut table = Table::new(&[
        "max_len",
        "pressure",
        "log_constant",
        "max_log_ratio",
        "holds",
    ]);
    table
        .push(row![
            r.max_len,
            g.pressure(),
            r.log_constant,
            r.max_log_ratio,
            r.holds
        ])
        .expect("five columns");
    let mut out = Outcome::new();
    out.metric("pressure", g.pressure());
    out.metric("log_constant", r.log_constant);
    out.metric("max_log_ratio", r.max_log_ratio);
    out.metric("holds", r.holds);
    out.tables.push(("gibbs", table));
    Ok(out)
}
