//! Replicated simulation harness: bias, mean interval width, empirical
//! coverage and average labeled count per estimator.
//!
//! Every replicate draws a fresh population. Its randomness comes from a
//! ChaCha8 stream keyed by `(seed, replicate, attempt)`, so results do not
//! depend on thread count or scheduling.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use crate::design_estimators::{bin_smooth, classic_mean, default_bins, greg, hajek, horvitz_thompson};
use crate::error::{Error, Result};
use crate::output::{fmt_sig, render_table};
use crate::ppi::{cross_ppi, ppi_estimate, OlsTrainer, RectifierForm};
use crate::propensity::{fit_logistic, predict_xi, sigmoid, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::types::{
    EstimateWithCI, EstimatorOptions, EstimatorTag, FinitePopulation, LabelingDesign, PredictionTerm,
    VarianceForm,
};

/// Data-generating process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dgp {
    /// `X ~ N(0,1)`, `Y ~ Bern(σ(X))`, `ξ = σ(0.5X)`, `Ŷ = σ(X + ε)`.
    BinaryLogit,
    /// As `BinaryLogit` with `ξ = σ(α + 0.5X)` and `α` solved so mean `ξ = p_lab`.
    Facet { p_lab: f64 },
    /// As `BinaryLogit` with constant `ξ = prob`.
    Srs { prob: f64 },
}

impl fmt::Display for Dgp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dgp::BinaryLogit => f.write_str("binary-logit"),
            Dgp::Facet { p_lab } => write!(f, "facet(p_lab={p_lab})"),
            Dgp::Srs { prob } => write!(f, "srs(prob={prob})"),
        }
    }
}

/// Inclusion probabilities handed to the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum XiModel {
    /// The generating `ξ`.
    #[default]
    TrueXi,
    /// `ξ̂` from a logistic fit of `R` on `X`.
    EstimatedXi,
}

impl FromStr for XiModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "true" | "truexi" => Ok(XiModel::TrueXi),
            "estimated" | "estimatedxi" => Ok(XiModel::EstimatedXi),
            _ => Err(Error::InvalidArgument(format!("unknown xi model '{s}'"))),
        }
    }
}

impl fmt::Display for XiModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            XiModel::TrueXi => "true",
            XiModel::EstimatedXi => "estimated",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub n_units: usize,
    pub n_replicates: usize,
    pub dgp: Dgp,
    pub xi_model: XiModel,
    pub estimators: Vec<EstimatorTag>,
    pub ci_level: f64,
    pub seed: u64,
    pub variance: VarianceForm,
    pub prediction_term: PredictionTerm,
    /// Folds for `CrossPPI`.
    pub cross_folds: usize,
    /// Attempts per replicate before it counts as failed.
    pub max_attempts: u32,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n_units: 500,
            n_replicates: 200,
            dgp: Dgp::BinaryLogit,
            xi_model: XiModel::TrueXi,
            estimators: EstimatorTag::COMPARISON.to_vec(),
            ci_level: 0.95,
            seed: 1,
            variance: VarianceForm::Superpopulation,
            prediction_term: PredictionTerm::Fixed,
            cross_folds: 5,
            max_attempts: 100,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_units == 0 {
            return Err(Error::InvalidArgument("n_units must be at least 1".into()));
        }
        if self.n_replicates == 0 {
            return Err(Error::InvalidArgument("n_replicates must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidArgument("no estimators requested".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::InvalidArgument(format!("ci_level {} not in (0, 1)", self.ci_level)));
        }
        if self.max_attempts == 0 {
            return Err(Error::InvalidArgument("max_attempts must be at least 1".into()));
        }
        match self.dgp {
            Dgp::Facet { p_lab } if !(p_lab > 0.0 && p_lab < 1.0) => Err(Error::InvalidProportion(p_lab)),
            Dgp::Srs { prob } if !(prob > 0.0 && prob <= 1.0) => Err(Error::InvalidProportion(prob)),
            _ => Ok(()),
        }
    }

    fn options(&self) -> EstimatorOptions {
        EstimatorOptions {
            level: self.ci_level,
            variance: self.variance,
            prediction_term: self.prediction_term,
        }
    }
}

/// ChaCha8 stream for one replicate attempt.
pub fn replicate_rng(seed: u64, replicate: usize, attempt: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((replicate as u64) << 24) | u64::from(attempt));
    rng
}

/// Draws outcomes, labels and predictions for given covariates and `ξ`.
fn draw_units<R: Rng>(x: Vec<f64>, xi: Vec<f64>, rng: &mut R) -> Result<(FinitePopulation, LabelingDesign)> {
    let noise = Normal::new(0.0, 0.5).expect("valid normal");
    let n = x.len();
    let mut y = Vec::with_capacity(n);
    let mut yhat = Vec::with_capacity(n);
    let mut labeled = Vec::with_capacity(n);
    for (&xv, &p) in x.iter().zip(&xi) {
        y.push(if rng.random::<f64>() < sigmoid(xv) { 1.0 } else { 0.0 });
        labeled.push(rng.random::<f64>() < p);
        yhat.push(sigmoid(xv + noise.sample(rng)));
    }
    let pop = FinitePopulation::from_column(&x, y, Some(yhat))?;
    let design = LabelingDesign::from_labels(xi, labeled)?;
    Ok((pop, design))
}

fn draw_covariates<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Intercept `α` with `mean σ(α + 0.5 xᵢ) = p`, by safeguarded Newton.
pub fn facet_intercept(x: &[f64], p: f64) -> f64 {
    let g = |a: f64| {
        let (mut m, mut d) = (0.0, 0.0);
        for &v in x {
            let s = sigmoid(a + 0.5 * v);
            m += s;
            d += s * (1.0 - s);
        }
        let n = x.len() as f64;
        (m / n - p, d / n)
    };
    let (mut lo, mut hi) = (-60.0_f64, 60.0_f64);
    let mut a = (p / (1.0 - p)).ln();
    for _ in 0..200 {
        let (f, d) = g(a);
        if f.abs() < 1e-14 {
            break;
        }
        if f > 0.0 {
            hi = a;
        } else {
            lo = a;
        }
        let step = a - f / d;
        a = if d > 0.0 && step > lo && step < hi { step } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-14 {
            break;
        }
    }
    a
}

fn binary_logit_with<R: Rng>(x: Vec<f64>, rng: &mut R) -> Result<(FinitePopulation, LabelingDesign)> {
    let xi = x.iter().map(|&v| sigmoid(0.5 * v)).collect();
    draw_units(x, xi, rng)
}

fn facet_with<R: Rng>(x: Vec<f64>, p_lab: f64, rng: &mut R) -> Result<(FinitePopulation, LabelingDesign)> {
    let xi = if p_lab == 1.0 {
        vec![1.0; x.len()]
    } else {
        let a = facet_intercept(&x, p_lab);
        x.iter().map(|&v| sigmoid(a + 0.5 * v).max(f64::MIN_POSITIVE)).collect()
    };
    draw_units(x, xi, rng)
}

fn generate<R: Rng>(dgp: Dgp, n: usize, rng: &mut R) -> Result<(FinitePopulation, LabelingDesign)> {
    let x = draw_covariates(n, rng);
    match dgp {
        Dgp::BinaryLogit => binary_logit_with(x, rng),
        Dgp::Facet { p_lab } => facet_with(x, p_lab, rng),
        Dgp::Srs { prob } => {
            let xi = vec![prob; n];
            draw_units(x, xi, rng)
        }
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("population size must be at least 1".into()));
    }
    Ok(())
}

/// Informative-labeling binary design with `ξᵢ = σ(0.5Xᵢ)`.
pub fn dgp_binary_logit(n: usize, seed: u64) -> Result<(FinitePopulation, LabelingDesign)> {
    check_n(n)?;
    generate(Dgp::BinaryLogit, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// `dgp_binary_logit` on supplied covariates.
pub fn dgp_binary_logit_with_covariates(x: Vec<f64>, seed: u64) -> Result<(FinitePopulation, LabelingDesign)> {
    check_n(x.len())?;
    binary_logit_with(x, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Low labeling-rate design with mean `ξ` equal to `p_lab`.
/// `p_lab = 1` labels every unit.
pub fn dgp_facet(n: usize, p_lab: f64, seed: u64) -> Result<(FinitePopulation, LabelingDesign)> {
    check_n(n)?;
    if !(p_lab > 0.0 && p_lab <= 1.0) {
        return Err(Error::InvalidProportion(p_lab));
    }
    generate(Dgp::Facet { p_lab }, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Binary outcomes with constant inclusion probability `prob`.
pub fn dgp_srs(n: usize, prob: f64, seed: u64) -> Result<(FinitePopulation, LabelingDesign)> {
    check_n(n)?;
    if !(prob > 0.0 && prob <= 1.0) {
        return Err(Error::InvalidProportion(prob));
    }
    generate(Dgp::Srs { prob }, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Replaces `ξ` by the fitted `ξ̂` from a logistic regression of `R` on `X`.
pub fn estimate_xi(pop: &FinitePopulation, design: &LabelingDesign) -> Result<LabelingDesign> {
    estimate_xi_on(pop.covariates(), design)
}

pub(crate) fn estimate_xi_on(x: &DMatrix<f64>, design: &LabelingDesign) -> Result<LabelingDesign> {
    let model = fit_logistic(x, design.labeled(), DEFAULT_MAX_ITER, DEFAULT_TOL)?;
    design.with_inclusion_probs(predict_xi(&model, x)?)
}

/// Computes one estimator by tag.
pub fn compute_estimate(
    tag: EstimatorTag,
    pop: &FinitePopulation,
    design: &LabelingDesign,
    opts: &EstimatorOptions,
    cross_folds: usize,
    fold_seed: u64,
) -> Result<EstimateWithCI> {
    match tag {
        EstimatorTag::Classic => classic_mean(pop, design, opts),
        EstimatorTag::HT => horvitz_thompson(pop, design, opts),
        EstimatorTag::Hajek => hajek(pop, design, opts),
        EstimatorTag::GREG => greg(pop, design, opts),
        EstimatorTag::BinSmooth => bin_smooth(pop, design, &default_bins(design)?, opts),
        EstimatorTag::PPI => ppi_estimate(pop, design, RectifierForm::Unweighted, opts),
        EstimatorTag::PPI_HT => ppi_estimate(pop, design, RectifierForm::HT, opts),
        EstimatorTag::PPI_Hajek => ppi_estimate(pop, design, RectifierForm::Hajek, opts),
        EstimatorTag::CrossPPI => cross_ppi(
            pop,
            design,
            cross_folds,
            &OlsTrainer,
            RectifierForm::Hajek,
            fold_seed,
            opts,
        ),
    }
}

/// Everything computed for one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub truth: f64,
    pub n_lab: usize,
    /// Failed attempts before this one succeeded.
    pub regenerated: u32,
    /// In `config.estimators` order.
    pub estimates: Vec<EstimateWithCI>,
}

fn attempt(config: &SimulationConfig, replicate: usize, attempt: u32) -> Result<ReplicateResult> {
    let mut rng = replicate_rng(config.seed, replicate, attempt);
    let (pop, mut design) = generate(config.dgp, config.n_units, &mut rng)?;
    if config.xi_model == XiModel::EstimatedXi {
        design = estimate_xi(&pop, &design)?;
    }
    let fold_seed = rng.random::<u64>();
    let opts = config.options();
    let estimates = config
        .estimators
        .iter()
        .map(|&tag| compute_estimate(tag, &pop, &design, &opts, config.cross_folds, fold_seed))
        .collect::<Result<Vec<_>>>()?;
    if let Some(bad) = estimates.iter().find(|e| !e.estimate.is_finite() || !e.std_error.is_finite()) {
        return Err(Error::NonFiniteValue {
            field: bad.estimator_tag.as_str(),
            index: replicate,
        });
    }
    Ok(ReplicateResult {
        replicate,
        truth: pop.outcome_mean(),
        n_lab: design.n_lab(),
        regenerated: attempt,
        estimates,
    })
}

/// Runs one replicate, regenerating the data after a failed attempt.
/// Returns the last error if every attempt fails.
pub fn run_replicate(config: &SimulationConfig, replicate: usize) -> Result<ReplicateResult> {
    let mut last = None;
    for a in 0..config.max_attempts {
        match attempt(config, replicate, a) {
            Ok(r) => return Ok(r),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub estimator: EstimatorTag,
    pub mean_estimate: f64,
    pub bias: f64,
    pub mean_width: f64,
    pub coverage: f64,
    pub avg_n_lab: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub rows: Vec<ReportRow>,
    /// Mean of the per-replicate population means.
    pub truth: f64,
    /// Replicates included in the aggregates.
    pub n_used: usize,
    /// Total failed attempts that were regenerated.
    pub regenerated: u64,
    /// Replicates dropped after exhausting every attempt.
    pub failed: usize,
    pub config: SimulationConfig,
}

pub const REPORT_HEADER: [&str; 8] = [
    "estimator",
    "mean_estimate",
    "bias",
    "mean_width",
    "coverage",
    "avg_n_lab",
    "n_replicates",
    "truth",
];

impl SimulationReport {
    pub fn row(&self, tag: EstimatorTag) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.estimator == tag)
    }

    fn cells(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.estimator.to_string(),
                    fmt_sig(r.mean_estimate, 6),
                    fmt_sig(r.bias, 6),
                    fmt_sig(r.mean_width, 6),
                    fmt_sig(r.coverage, 6),
                    fmt_sig(r.avg_n_lab, 6),
                    self.n_used.to_string(),
                    fmt_sig(self.truth, 6),
                ]
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(REPORT_HEADER)?;
        for row in self.cells() {
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "dgp {}  N {}  replicates {}  xi {}  seed {}\n",
            self.config.dgp, self.config.n_units, self.n_used, self.config.xi_model, self.config.seed
        );
        if self.regenerated > 0 || self.failed > 0 {
            out.push_str(&format!(
                "regenerated attempts {}  failed replicates {}\n",
                self.regenerated, self.failed
            ));
        }
        out.push_str(&render_table(&REPORT_HEADER, &self.cells()));
        out
    }
}

fn run_all(config: &SimulationConfig, count: usize) -> Vec<Result<ReplicateResult>> {
    (0..count)
        .into_par_iter()
        .map(|r| run_replicate(config, r))
        .collect()
}

/// Runs every replicate (in parallel on the current rayon pool) and aggregates.
pub fn run_simulation(config: &SimulationConfig) -> Result<SimulationReport> {
    config.validate()?;
    let results = run_all(config, config.n_replicates);
    let mut ok = Vec::with_capacity(results.len());
    let mut failed = 0;
    let mut last_err = None;
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                failed += 1;
                last_err = Some(e);
            }
        }
    }
    if ok.is_empty() {
        return Err(last_err.expect("some replicate ran"));
    }
    let n = ok.len() as f64;
    let truth = ok.iter().map(|r| r.truth).sum::<f64>() / n;
    let avg_n_lab = ok.iter().map(|r| r.n_lab as f64).sum::<f64>() / n;
    let rows = config
        .estimators
        .iter()
        .enumerate()
        .map(|(k, &tag)| {
            let mean_estimate = ok.iter().map(|r| r.estimates[k].estimate).sum::<f64>() / n;
            let mean_width = ok.iter().map(|r| r.estimates[k].width()).sum::<f64>() / n;
            let covered = ok.iter().filter(|r| r.estimates[k].covers(r.truth)).count();
            ReportRow {
                estimator: tag,
                mean_estimate,
                bias: mean_estimate - truth,
                mean_width,
                coverage: covered as f64 / n,
                avg_n_lab,
            }
        })
        .collect();
    Ok(SimulationReport {
        rows,
        truth,
        n_used: ok.len(),
        regenerated: ok.iter().map(|r| u64::from(r.regenerated)).sum(),
        failed,
        config: config.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRow {
    pub replicate: usize,
    pub estimator: EstimatorTag,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub truth: f64,
    pub covered: bool,
}

pub const INTERVAL_HEADER: [&str; 7] = ["replicate", "estimator", "estimate", "lower", "upper", "truth", "covered"];

/// Per-replicate intervals for the first `k` replicates, identical to the
/// values `run_simulation` aggregates.
pub fn first_k_intervals(config: &SimulationConfig, k: usize) -> Result<Vec<IntervalRow>> {
    config.validate()?;
    if k > config.n_replicates {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds n_replicates = {}",
            config.n_replicates
        )));
    }
    let mut rows = Vec::with_capacity(k * config.estimators.len());
    for result in run_all(config, k) {
        let r = result?;
        for e in &r.estimates {
            rows.push(IntervalRow {
                replicate: r.replicate,
                estimator: e.estimator_tag,
                estimate: e.estimate,
                lower: e.ci_lower,
                upper: e.ci_upper,
                truth: r.truth,
                covered: e.covers(r.truth),
            });
        }
    }
    Ok(rows)
}

pub fn interval_cells(rows: &[IntervalRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                r.replicate.to_string(),
                r.estimator.to_string(),
                fmt_sig(r.estimate, 6),
                fmt_sig(r.lower, 6),
                fmt_sig(r.upper, 6),
                fmt_sig(r.truth, 6),
                u8::from(r.covered).to_string(),
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(dgp: Dgp, reps: usize) -> SimulationConfig {
        SimulationConfig {
            n_units: 300,
            n_replicates: reps,
            dgp,
            ..SimulationConfig::default()
        }
    }

    #[test]
    fn zero_covariates_give_half() {
        let (_, d) = dgp_binary_logit_with_covariates(vec![0.0; 10], 3).unwrap();
        assert!(d.inclusion_probs().iter().all(|&x| x == 0.5));
    }

    #[test]
    fn binary_logit_shapes() {
        let (pop, d) = dgp_binary_logit(500, 7).unwrap();
        assert_eq!(pop.n_units(), 500);
        assert!(pop.outcomes().iter().all(|&y| y == 0.0 || y == 1.0));
        let p = pop.predictions().unwrap();
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        for (i, &xi) in d.inclusion_probs().iter().enumerate() {
            assert_eq!(xi, sigmoid(0.5 * pop.covariates()[(i, 0)]));
        }
    }

    #[test]
    fn mean_xi_near_half() {
        let (_, d) = dgp_binary_logit(100_000, 11).unwrap();
        let m = d.inclusion_probs().iter().sum::<f64>() / 1e5;
        assert!((m - 0.5).abs() < 0.005);
    }

    #[test]
    fn facet_mean_xi_exact() {
        for p in [0.01, 0.02, 0.05, 0.3] {
            let (_, d) = dgp_facet(20_000, p, 5).unwrap();
            let m = d.inclusion_probs().iter().sum::<f64>() / 20_000.0;
            assert!((m - p).abs() < 1e-10, "p = {p}, mean = {m}");
        }
    }

    #[test]
    fn facet_all_labeled() {
        let (pop, d) = dgp_facet(200, 1.0, 1).unwrap();
        assert_eq!(d.n_lab(), 200);
        let c = classic_mean(&pop, &d, &EstimatorOptions::default()).unwrap();
        assert_eq!(c.estimate, pop.outcome_mean());
    }

    #[test]
    fn facet_rejects_bad_proportion() {
        for p in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(dgp_facet(10, p, 1), Err(Error::InvalidProportion(_))));
        }
    }

    #[test]
    fn deterministic_report() {
        let c = small(Dgp::BinaryLogit, 8);
        assert_eq!(run_simulation(&c).unwrap(), run_simulation(&c).unwrap());
    }

    #[test]
    fn independent_of_thread_count() {
        let c = small(Dgp::BinaryLogit, 6);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = one.install(|| run_simulation(&c).unwrap());
        assert_eq!(a, run_simulation(&c).unwrap());
    }

    #[test]
    fn single_replicate_echoes_values() {
        let c = small(Dgp::BinaryLogit, 1);
        let rep = run_replicate(&c, 0).unwrap();
        let report = run_simulation(&c).unwrap();
        for (row, e) in report.rows.iter().zip(&rep.estimates) {
            assert_eq!(row.mean_estimate, e.estimate);
            assert_eq!(row.mean_width, e.width());
            assert!(row.coverage == 0.0 || row.coverage == 1.0);
            assert!((row.bias - (row.mean_estimate - report.truth)).abs() < 1e-12);
        }
    }

    #[test]
    fn intervals_match_replicates() {
        let c = small(Dgp::BinaryLogit, 5);
        let rows = first_k_intervals(&c, 3).unwrap();
        assert_eq!(rows.len(), 15);
        for r in &rows {
            let rep = run_replicate(&c, r.replicate).unwrap();
            let e = rep.estimates.iter().find(|e| e.estimator_tag == r.estimator).unwrap();
            assert_eq!((r.lower, r.upper, r.estimate), (e.ci_lower, e.ci_upper, e.estimate));
        }
        assert!(first_k_intervals(&c, 0).unwrap().is_empty());
        assert!(first_k_intervals(&c, 6).is_err());
    }

    #[test]
    fn coverage_is_a_count() {
        let c = small(Dgp::BinaryLogit, 7);
        let r = run_simulation(&c).unwrap();
        for row in &r.rows {
            let k = row.coverage * 7.0;
            assert!((k - k.round()).abs() < 1e-9 && (0.0..=1.0).contains(&row.coverage));
        }
    }

    #[test]
    fn regenerates_failed_replicates() {
        // with N = 3 and ξ = 0.2 most draws have fewer than two labels
        let c = SimulationConfig {
            n_units: 3,
            n_replicates: 20,
            dgp: Dgp::Srs { prob: 0.2 },
            estimators: vec![EstimatorTag::Classic],
            ..SimulationConfig::default()
        };
        let r = run_simulation(&c).unwrap();
        assert!(r.regenerated > 0);
        assert_eq!(r.n_used + r.failed, 20);
    }

    #[test]
    fn rejects_invalid_config() {
        let c = SimulationConfig {
            n_replicates: 0,
            ..SimulationConfig::default()
        };
        assert!(c.validate().is_err());
        let c = small(Dgp::Facet { p_lab: 1.0 }, 1);
        assert!(matches!(c.validate(), Err(Error::InvalidProportion(_))));
    }

    #[test]
    fn all_estimators_run() {
        let c = SimulationConfig {
            estimators: EstimatorTag::ALL.to_vec(),
            xi_model: XiModel::EstimatedXi,
            ..small(Dgp::BinaryLogit, 3)
        };
        let r = run_simulation(&c).unwrap();
        assert_eq!(r.rows.len(), 9);
        assert_eq!(r.failed, 0);
    }

    #[test]
    fn csv_layout() {
        let r = run_simulation(&small(Dgp::BinaryLogit, 2)).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), REPORT_HEADER.join(","));
        assert_eq!(lines.count(), 5);
    }
}
