//! Shared domain types: the finite population, the labeling design and the
//! interval-valued estimate every estimator returns.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Covariates, outcomes and optional model predictions for `N` units.
#[derive(Debug, Clone, PartialEq)]
pub struct FinitePopulation {
    covariates: DMatrix<f64>,
    outcomes: Vec<f64>,
    predictions: Option<Vec<f64>>,
}

impl FinitePopulation {
    /// Validates row counts and finiteness.
    pub fn new(
        covariates: DMatrix<f64>,
        outcomes: Vec<f64>,
        predictions: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = covariates.nrows();
        if n == 0 {
            return Err(Error::InvalidArgument("population must have at least one unit".into()));
        }
        if outcomes.len() != n {
            return Err(Error::DimensionMismatch {
                what: "outcomes",
                expected: n,
                found: outcomes.len(),
            });
        }
        check_finite("outcomes", &outcomes)?;
        // column-major storage; report the row of the first bad entry
        if let Some(pos) = covariates.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                field: "covariates",
                index: pos % n,
            });
        }
        if let Some(p) = &predictions {
            if p.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "predictions",
                    expected: n,
                    found: p.len(),
                });
            }
            check_finite("predictions", p)?;
        }
        Ok(Self {
            covariates,
            outcomes,
            predictions,
        })
    }

    /// Builds from row-major covariate rows.
    pub fn from_rows(
        rows: &[Vec<f64>],
        outcomes: Vec<f64>,
        predictions: Option<Vec<f64>>,
    ) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        for row in rows {
            if row.len() != p {
                return Err(Error::DimensionMismatch {
                    what: "covariate row",
                    expected: p,
                    found: row.len(),
                });
            }
        }
        let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Self::new(x, outcomes, predictions)
    }

    /// Single-covariate convenience constructor.
    pub fn from_column(
        x: &[f64],
        outcomes: Vec<f64>,
        predictions: Option<Vec<f64>>,
    ) -> Result<Self> {
        Self::new(DMatrix::from_column_slice(x.len(), 1, x), outcomes, predictions)
    }

    pub fn n_units(&self) -> usize {
        self.outcomes.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn predictions(&self) -> Option<&[f64]> {
        self.predictions.as_deref()
    }

    pub fn require_predictions(&self) -> Result<&[f64]> {
        self.predictions().ok_or(Error::MissingPredictions)
    }

    /// Finite-population mean of the outcome.
    pub fn outcome_mean(&self) -> f64 {
        mean(&self.outcomes)
    }

    /// Returns a copy carrying `predictions`.
    pub fn with_predictions(&self, predictions: Vec<f64>) -> Result<Self> {
        Self::new(self.covariates.clone(), self.outcomes.clone(), Some(predictions))
    }

    /// Returns a copy whose outcomes are replaced.
    pub fn with_outcomes(&self, outcomes: Vec<f64>) -> Result<Self> {
        Self::new(self.covariates.clone(), outcomes, self.predictions.clone())
    }
}

fn check_finite(field: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFiniteValue { field, index }),
        None => Ok(()),
    }
}

/// Inclusion probabilities `ξᵢ` and realized label indicators `Rᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelingDesign {
    inclusion_probs: Vec<f64>,
    labeled: Vec<bool>,
    n_lab: usize,
}

impl LabelingDesign {
    /// `indicators` must be 0 or 1. A design with no labeled units is valid
    /// here; estimators reject it with [`Error::NoLabeledUnits`].
    pub fn new(inclusion_probs: Vec<f64>, indicators: &[f64]) -> Result<Self> {
        let labeled = indicators
            .iter()
            .enumerate()
            .map(|(index, &r)| {
                if r == 1.0 {
                    Ok(true)
                } else if r == 0.0 {
                    Ok(false)
                } else {
                    Err(Error::InvalidIndicator { index, value: r })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_labels(inclusion_probs, labeled)
    }

    pub fn from_labels(inclusion_probs: Vec<f64>, labeled: Vec<bool>) -> Result<Self> {
        if inclusion_probs.len() != labeled.len() {
            return Err(Error::DimensionMismatch {
                what: "label indicators",
                expected: inclusion_probs.len(),
                found: labeled.len(),
            });
        }
        for (index, &xi) in inclusion_probs.iter().enumerate() {
            // NaN fails this comparison as well
            if !(xi > 0.0 && xi <= 1.0) {
                return Err(Error::ProbabilityOutOfRange { index, value: xi });
            }
        }
        let n_lab = labeled.iter().filter(|&&r| r).count();
        Ok(Self {
            inclusion_probs,
            labeled,
            n_lab,
        })
    }

    pub fn len(&self) -> usize {
        self.labeled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labeled.is_empty()
    }

    pub fn inclusion_probs(&self) -> &[f64] {
        &self.inclusion_probs
    }

    pub fn labeled(&self) -> &[bool] {
        &self.labeled
    }

    pub fn is_labeled(&self, i: usize) -> bool {
        self.labeled[i]
    }

    pub fn n_lab(&self) -> usize {
        self.n_lab
    }

    pub fn labeled_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labeled[i]).collect()
    }

    /// Same indicators, different inclusion probabilities (e.g. fitted `ξ̂`).
    pub fn with_inclusion_probs(&self, inclusion_probs: Vec<f64>) -> Result<Self> {
        Self::from_labels(inclusion_probs, self.labeled.clone())
    }

    pub(crate) fn require_labels(&self, needed: usize) -> Result<()> {
        if self.n_lab == 0 {
            Err(Error::NoLabeledUnits)
        } else if self.n_lab < needed {
            Err(Error::InsufficientLabels {
                needed,
                found: self.n_lab,
            })
        } else {
            Ok(())
        }
    }

    pub(crate) fn check_matches(&self, pop: &FinitePopulation) -> Result<()> {
        if self.len() != pop.n_units() {
            return Err(Error::DimensionMismatch {
                what: "labeling design",
                expected: pop.n_units(),
                found: self.len(),
            });
        }
        Ok(())
    }
}

#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorTag {
    Classic,
    HT,
    Hajek,
    GREG,
    BinSmooth,
    PPI,
    PPI_HT,
    PPI_Hajek,
    CrossPPI,
}

impl EstimatorTag {
    pub const ALL: [EstimatorTag; 9] = [
        EstimatorTag::Classic,
        EstimatorTag::HT,
        EstimatorTag::Hajek,
        EstimatorTag::GREG,
        EstimatorTag::BinSmooth,
        EstimatorTag::PPI,
        EstimatorTag::PPI_HT,
        EstimatorTag::PPI_Hajek,
        EstimatorTag::CrossPPI,
    ];

    /// The five estimators compared in the synthetic and NHANES-style studies.
    pub const COMPARISON: [EstimatorTag; 5] = [
        EstimatorTag::Classic,
        EstimatorTag::HT,
        EstimatorTag::Hajek,
        EstimatorTag::PPI,
        EstimatorTag::PPI_Hajek,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorTag::Classic => "Classic",
            EstimatorTag::HT => "HT",
            EstimatorTag::Hajek => "Hajek",
            EstimatorTag::GREG => "GREG",
            EstimatorTag::BinSmooth => "BinSmooth",
            EstimatorTag::PPI => "PPI",
            EstimatorTag::PPI_HT => "PPI_HT",
            EstimatorTag::PPI_Hajek => "PPI_Hajek",
            EstimatorTag::CrossPPI => "CrossPPI",
        }
    }
}

impl fmt::Display for EstimatorTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        EstimatorTag::ALL
            .into_iter()
            .find(|t| t.as_str().to_ascii_lowercase() == lower)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown estimator '{s}'")))
    }
}

/// Point estimate with a symmetric normal-theory confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateWithCI {
    pub estimate: f64,
    pub std_error: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub level: f64,
    pub estimator_tag: EstimatorTag,
}

impl EstimateWithCI {
    pub fn normal(tag: EstimatorTag, estimate: f64, std_error: f64, level: f64) -> Self {
        let half = normal_quantile(level) * std_error;
        Self {
            estimate,
            std_error,
            ci_lower: estimate - half,
            ci_upper: estimate + half,
            level,
            estimator_tag: tag,
        }
    }

    pub(crate) fn from_variance(tag: EstimatorTag, estimate: f64, variance: f64, level: f64) -> Self {
        Self::normal(tag, estimate, variance.max(0.0).sqrt(), level)
    }

    pub fn width(&self) -> f64 {
        self.ci_upper - self.ci_lower
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_lower <= value && value <= self.ci_upper
    }

    /// Zero standard error, e.g. all labeled outcomes identical.
    pub fn is_degenerate(&self) -> bool {
        self.std_error == 0.0
    }
}

/// Two-sided standard normal quantile `z` with `P(|Z| ≤ z) = level`.
pub fn normal_quantile(level: f64) -> f64 {
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    std.inverse_cdf(0.5 + level / 2.0)
}

/// How the variance of an inverse-probability-weighted sum is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarianceForm {
    /// Poisson-design plug-in `N⁻² Σ Rᵢ (1 − ξᵢ) zᵢ² / ξᵢ²`; unbiased for the
    /// design variance around the finite-population target.
    #[default]
    Poisson,
    /// Sample variance of the `N` unit contributions `Rᵢ zᵢ / ξᵢ` divided by
    /// `N`, i.e. treating units as iid draws from a superpopulation.
    Superpopulation,
}

impl FromStr for VarianceForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "poisson" | "design" => Ok(VarianceForm::Poisson),
            "superpopulation" | "superpop" | "iid" => Ok(VarianceForm::Superpopulation),
            _ => Err(Error::InvalidArgument(format!("unknown variance form '{s}'"))),
        }
    }
}

/// Variance attributed to the PPI prediction term `N⁻¹ Σ Ŷᵢ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PredictionTerm {
    /// Predictions cover the whole finite population, so the term is fixed.
    #[default]
    Fixed,
    /// Adds the sample variance of `Ŷ` over the unlabeled pool over its size.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOptions {
    pub level: f64,
    pub variance: VarianceForm,
    pub prediction_term: PredictionTerm,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            level: 0.95,
            variance: VarianceForm::Poisson,
            prediction_term: PredictionTerm::Fixed,
        }
    }
}

impl EstimatorOptions {
    pub fn with_variance(mut self, variance: VarianceForm) -> Self {
        self.variance = variance;
        self
    }

    pub fn with_level(mut self, level: f64) -> Self {
        self.level = level;
        self
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance with `n − 1` denominator; zero for fewer than two values.
pub(crate) fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_population() {
        let pop = FinitePopulation::new(DMatrix::zeros(1, 1), vec![1.0], None).unwrap();
        assert_eq!(pop.n_units(), 1);
        assert!(pop.predictions().is_none());
    }

    #[test]
    fn population_of_500() {
        let x: Vec<f64> = (0..500).map(|i| i as f64).collect();
        let pop = FinitePopulation::from_column(&x, vec![0.0; 500], Some(vec![0.5; 500])).unwrap();
        assert_eq!(pop.n_units(), 500);
    }

    #[test]
    fn outcome_length_mismatch() {
        let err = FinitePopulation::new(DMatrix::zeros(500, 1), vec![0.0; 499], None).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 500, found: 499, .. }));
    }

    #[test]
    fn non_finite_rejected() {
        let err = FinitePopulation::from_column(&[0.0, f64::NAN], vec![1.0, 2.0], None).unwrap_err();
        assert!(matches!(err, Error::NonFiniteValue { field: "covariates", index: 1 }));
        let err = FinitePopulation::from_column(&[0.0, 1.0], vec![1.0, f64::INFINITY], None).unwrap_err();
        assert!(matches!(err, Error::NonFiniteValue { field: "outcomes", index: 1 }));
    }

    #[test]
    fn design_full_labeling() {
        let d = LabelingDesign::new(vec![1.0; 3], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(d.n_lab(), 3);
    }

    #[test]
    fn design_half() {
        let d = LabelingDesign::new(vec![0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert_eq!(d.n_lab(), 1);
        assert_eq!(d.labeled_indices(), vec![0]);
    }

    #[test]
    fn design_rejects_zero_probability() {
        let err = LabelingDesign::new(vec![0.5, 0.0], &[1.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::ProbabilityOutOfRange { index: 1, .. }));
        assert!(LabelingDesign::new(vec![1.5], &[1.0]).is_err());
        assert!(LabelingDesign::new(vec![f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn design_rejects_bad_indicator() {
        let err = LabelingDesign::new(vec![0.5], &[2.0]).unwrap_err();
        assert!(matches!(err, Error::InvalidIndicator { index: 0, .. }));
    }

    #[test]
    fn no_labels_is_lazy() {
        let d = LabelingDesign::new(vec![0.5, 0.5], &[0.0, 0.0]).unwrap();
        assert!(matches!(d.require_labels(1), Err(Error::NoLabeledUnits)));
    }

    #[test]
    fn interval_width_matches_quantile() {
        let e = EstimateWithCI::normal(EstimatorTag::HT, 1.0, 0.5, 0.95);
        let z = normal_quantile(0.95);
        assert!((z - 1.959963984540054).abs() < 1e-9);
        assert!((e.width() - 2.0 * z * 0.5).abs() < 1e-15);
        assert!(e.ci_lower <= e.estimate && e.estimate <= e.ci_upper);
    }

    #[test]
    fn tag_round_trip() {
        for tag in EstimatorTag::ALL {
            assert_eq!(tag.as_str().parse::<EstimatorTag>().unwrap(), tag);
        }
        assert_eq!("ppi_hajek".parse::<EstimatorTag>().unwrap(), EstimatorTag::PPI_Hajek);
    }
}
