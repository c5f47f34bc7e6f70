//! Prediction-powered inference: the prediction term `N⁻¹ Σ Ŷᵢ` minus a
//! rectifier estimating the mean residual `eᵢ = Ŷᵢ − Yᵢ` from labeled units.
//!
//! The rectifier comes in three forms: the plain labeled mean, and the
//! Horvitz–Thompson and Hájek inverse-probability-weighted means. The weighted
//! forms stay unbiased (HT) or nearly so (Hájek) when `ξᵢ` varies with the
//! covariates.

use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::design_estimators::ipw_variance;
use crate::error::{Error, Result};
use crate::propensity::{fit_logistic, LogisticModel, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::regression::{linear_predictor, ols_with_intercept, select_rows};
use crate::types::{
    mean, sample_variance, EstimateWithCI, EstimatorOptions, EstimatorTag, FinitePopulation,
    LabelingDesign, PredictionTerm, VarianceForm,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RectifierForm {
    Unweighted,
    HT,
    #[default]
    Hajek,
}

impl RectifierForm {
    pub fn tag(self) -> EstimatorTag {
        match self {
            RectifierForm::Unweighted => EstimatorTag::PPI,
            RectifierForm::HT => EstimatorTag::PPI_HT,
            RectifierForm::Hajek => EstimatorTag::PPI_Hajek,
        }
    }
}

impl FromStr for RectifierForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unweighted" | "none" => Ok(RectifierForm::Unweighted),
            "ht" | "horvitz-thompson" => Ok(RectifierForm::HT),
            "hajek" => Ok(RectifierForm::Hajek),
            _ => Err(Error::InvalidArgument(format!("unknown rectifier form '{s}'"))),
        }
    }
}

/// Estimated mean prediction error and its variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rectifier {
    pub value: f64,
    pub variance: f64,
    pub form: RectifierForm,
}

fn residuals(pop: &FinitePopulation, predictions: &[f64]) -> Vec<f64> {
    predictions
        .iter()
        .zip(pop.outcomes())
        .map(|(f, y)| f - y)
        .collect()
}

/// Rectifier over `units` with inclusion probabilities `xi[i] * scale`.
fn rectify(
    resid: &[f64],
    units: &[usize],
    xi: &[f64],
    scale: f64,
    n_units: usize,
    form: RectifierForm,
    variance: VarianceForm,
) -> Rectifier {
    let prob = |i: usize| xi[i] * scale;
    let (value, var) = match form {
        RectifierForm::Unweighted => {
            let e: Vec<f64> = units.iter().map(|&i| resid[i]).collect();
            (mean(&e), sample_variance(&e) / e.len() as f64)
        }
        RectifierForm::HT => {
            let nf = n_units as f64;
            let value = units.iter().map(|&i| resid[i] / prob(i)).sum::<f64>() / nf;
            let var = ipw_variance(units.iter().map(|&i| (resid[i], prob(i))), n_units, nf, variance);
            (value, var)
        }
        RectifierForm::Hajek => {
            let n_hat: f64 = units.iter().map(|&i| 1.0 / prob(i)).sum();
            let value = units.iter().map(|&i| resid[i] / prob(i)).sum::<f64>() / n_hat;
            let var = ipw_variance(
                units.iter().map(|&i| (resid[i] - value, prob(i))),
                n_units,
                n_hat,
                variance,
            );
            (value, var)
        }
    };
    Rectifier {
        value,
        variance: var.max(0.0),
        form,
    }
}

fn full_rectifier(
    pop: &FinitePopulation,
    design: &LabelingDesign,
    form: RectifierForm,
    variance: VarianceForm,
) -> Result<Rectifier> {
    design.check_matches(pop)?;
    let predictions = pop.require_predictions()?;
    let needed = if form == RectifierForm::Unweighted { 2 } else { 1 };
    design.require_labels(needed)?;
    let resid = residuals(pop, predictions);
    Ok(rectify(
        &resid,
        &design.labeled_indices(),
        design.inclusion_probs(),
        1.0,
        pop.n_units(),
        form,
        variance,
    ))
}

/// `n_lab⁻¹ Σ_{Rᵢ=1} eᵢ`, variance `s²_e / n_lab`.
pub fn rectifier_unweighted(pop: &FinitePopulation, design: &LabelingDesign) -> Result<Rectifier> {
    full_rectifier(pop, design, RectifierForm::Unweighted, VarianceForm::Poisson)
}

/// `N⁻¹ Σ Rᵢ eᵢ / ξᵢ`.
pub fn rectifier_ht(
    pop: &FinitePopulation,
    design: &LabelingDesign,
    variance: VarianceForm,
) -> Result<Rectifier> {
    full_rectifier(pop, design, RectifierForm::HT, variance)
}

/// `(Σ Rᵢ eᵢ / ξᵢ) / (Σ Rᵢ / ξᵢ)` with linearized variance on `eᵢ − δ̂`.
pub fn rectifier_hajek(
    pop: &FinitePopulation,
    design: &LabelingDesign,
    variance: VarianceForm,
) -> Result<Rectifier> {
    full_rectifier(pop, design, RectifierForm::Hajek, variance)
}

pub fn rectifier(
    pop: &FinitePopulation,
    design: &LabelingDesign,
    form: RectifierForm,
    variance: VarianceForm,
) -> Result<Rectifier> {
    full_rectifier(pop, design, form, variance)
}

fn prediction_term_variance(
    predictions: &[f64],
    design: &LabelingDesign,
    mode: PredictionTerm,
) -> f64 {
    match mode {
        PredictionTerm::Fixed => 0.0,
        PredictionTerm::Sampled => {
            let pool: Vec<f64> = (0..predictions.len())
                .filter(|&i| !design.is_labeled(i))
                .map(|i| predictions[i])
                .collect();
            if pool.len() < 2 {
                0.0
            } else {
                sample_variance(&pool) / pool.len() as f64
            }
        }
    }
}

/// `N⁻¹ Σ Ŷᵢ − Δ̂` with a normal interval.
pub fn ppi_estimate(
    pop: &FinitePopulation,
    design: &LabelingDesign,
    form: RectifierForm,
    opts: &EstimatorOptions,
) -> Result<EstimateWithCI> {
    let rect = full_rectifier(pop, design, form, opts.variance)?;
    let predictions = pop.require_predictions()?;
    let estimate = mean(predictions) - rect.value;
    let var = rect.variance + prediction_term_variance(predictions, design, opts.prediction_term);
    Ok(EstimateWithCI::from_variance(form.tag(), estimate, var, opts.level))
}

/// Balanced random partition of the labeled units into `K` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    folds: Vec<Vec<usize>>,
}

impl FoldAssignment {
    pub fn n_folds(&self) -> usize {
        self.folds.len()
    }

    /// Unit indices in fold `k` (0-based), ascending.
    pub fn fold(&self, k: usize) -> &[usize] {
        &self.folds[k]
    }

    pub fn folds(&self) -> &[Vec<usize>] {
        &self.folds
    }

    /// 0-based fold of unit `i`, `None` for unlabeled units.
    pub fn fold_of(&self, unit: usize) -> Option<usize> {
        self.folds.iter().position(|f| f.binary_search(&unit).is_ok())
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.folds.iter().map(Vec::len).collect()
    }
}

/// Shuffles the labeled units with a seeded ChaCha stream and deals them
/// round-robin, so fold sizes differ by at most one.
pub fn assign_folds(design: &LabelingDesign, n_folds: usize, seed: u64) -> Result<FoldAssignment> {
    if n_folds < 2 {
        return Err(Error::InvalidArgument("cross-fitting needs at least two folds".into()));
    }
    if design.n_lab() < n_folds {
        return Err(Error::FoldTooSmall {
            fold: design.n_lab(),
            size: 0,
            needed: 1,
        });
    }
    let mut units = design.labeled_indices();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    units.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); n_folds];
    for (pos, unit) in units.into_iter().enumerate() {
        folds[pos % n_folds].push(unit);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldAssignment { folds })
}

/// A fitted prediction function.
pub trait Predictor {
    fn predict(&self, x: &DMatrix<f64>) -> Vec<f64>;
}

/// Maps labeled `(X, Y)` pairs to a prediction function.
pub trait Trainer: Sync {
    type Model: Predictor + Send;

    fn train(&self, x: &DMatrix<f64>, y: &[f64]) -> Result<Self::Model>;
}

/// Linear model with intercept first.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
}

impl Predictor for LinearModel {
    fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        linear_predictor(x, &self.coefficients)
    }
}

/// Ordinary least squares with intercept.
#[derive(Debug, Clone, Copy, Default)]
pub struct OlsTrainer;

impl Trainer for OlsTrainer {
    type Model = LinearModel;

    fn train(&self, x: &DMatrix<f64>, y: &[f64]) -> Result<LinearModel> {
        let beta = ols_with_intercept(x, y)?;
        Ok(LinearModel {
            coefficients: beta.iter().copied().collect(),
        })
    }
}

impl Predictor for LogisticModel {
    fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.probabilities(x).expect("trained on the same covariate layout")
    }
}

/// Logistic regression for binary outcomes; predictions are probabilities.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogisticTrainer;

impl Trainer for LogisticTrainer {
    type Model = LogisticModel;

    fn train(&self, x: &DMatrix<f64>, y: &[f64]) -> Result<LogisticModel> {
        let response = y
            .iter()
            .map(|&v| match v {
                1.0 => Ok(true),
                0.0 => Ok(false),
                other => Err(Error::Trainer(format!("logistic trainer needs 0/1 outcomes, got {other}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        fit_logistic(x, &response, DEFAULT_MAX_ITER, DEFAULT_TOL)
    }
}

/// One fold's contribution to cross-fitted PPI.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldTerm {
    /// `N⁻¹ Σᵢ f⁽⁻ᵏ⁾(Xᵢ)` over the whole population.
    pub prediction_mean: f64,
    pub rectifier: Rectifier,
    pub predictions: Vec<f64>,
}

/// Trains `f⁽⁻ᵏ⁾` on labeled units outside each fold and rectifies on the
/// held-out fold only. For the HT form the fold's inclusion probabilities
/// are `ξᵢ · n_k / n_lab` since each fold is a subsample of the labeled set.
pub fn cross_ppi_folds<T: Trainer>(
    pop: &FinitePopulation,
    design: &LabelingDesign,
    folds: &FoldAssignment,
    trainer: &T,
    form: RectifierForm,
    variance: VarianceForm,
) -> Result<Vec<FoldTerm>> {
    design.check_matches(pop)?;
    for (fold, members) in folds.folds().iter().enumerate() {
        if members.len() < 2 {
            return Err(Error::FoldTooSmall {
                fold,
                size: members.len(),
                needed: 2,
            });
        }
    }
    let n_lab = design.n_lab() as f64;
    let x = pop.covariates();
    let y = pop.outcomes();
    (0..folds.n_folds())
        .into_par_iter()
        .map(|k| {
            let train: Vec<usize> = folds
                .folds()
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .flat_map(|(_, f)| f.iter().copied())
                .collect();
            let train_y: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let model = trainer.train(&select_rows(x, &train), &train_y)?;
            let predictions = model.predict(x);
            if predictions.len() != pop.n_units() {
                return Err(Error::Trainer(format!(
                    "model returned {} predictions for {} units",
                    predictions.len(),
                    pop.n_units()
                )));
            }
            let held_out = folds.fold(k);
            let resid = residuals(pop, &predictions);
            let scale = held_out.len() as f64 / n_lab;
            let rectifier = rectify(
                &resid,
                held_out,
                design.inclusion_probs(),
                scale,
                pop.n_units(),
                form,
                variance,
            );
            Ok(FoldTerm {
                prediction_mean: mean(&predictions),
                rectifier,
                predictions,
            })
        })
        .collect()
}

/// Cross-fitted PPI: average over `K` folds of `N⁻¹ Σ f⁽⁻ᵏ⁾(Xᵢ) − Δ̂ₖ`.
pub fn cross_ppi<T: Trainer>(
    pop: &FinitePopulation,
    design: &LabelingDesign,
    n_folds: usize,
    trainer: &T,
    form: RectifierForm,
    seed: u64,
    opts: &EstimatorOptions,
) -> Result<EstimateWithCI> {
    design.check_matches(pop)?;
    if n_folds < 2 {
        return Err(Error::InvalidArgument("cross-fitting needs at least two folds".into()));
    }
    if design.n_lab() < 2 * n_folds {
        return Err(Error::FoldTooSmall {
            fold: 0,
            size: design.n_lab() / n_folds,
            needed: 2,
        });
    }
    let folds = assign_folds(design, n_folds, seed)?;
    let terms = cross_ppi_folds(pop, design, &folds, trainer, form, opts.variance)?;
    let k = terms.len() as f64;
    let estimate = terms
        .iter()
        .map(|t| t.prediction_mean - t.rectifier.value)
        .sum::<f64>()
        / k;
    let rect_var = terms.iter().map(|t| t.rectifier.variance).sum::<f64>() / (k * k);
    let averaged: Vec<f64> = (0..pop.n_units())
        .map(|i| terms.iter().map(|t| t.predictions[i]).sum::<f64>() / k)
        .collect();
    let var = rect_var + prediction_term_variance(&averaged, design, opts.prediction_term);
    Ok(EstimateWithCI::from_variance(EstimatorTag::CrossPPI, estimate, var, opts.level))
}
