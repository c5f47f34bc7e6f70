//! Prediction-powered inference for finite-population means under
//! informative labeling.
//!
//! The crate provides the classical design-based estimators (labeled mean,
//! Horvitz–Thompson, Hájek, GREG, binning–smoothing), PPI with unweighted and
//! inverse-probability-weighted rectifiers, cross-fitted PPI, a logistic
//! propensity model, the quantile-importance-sampling trapezoid estimator, and
//! a replicated simulation harness.

pub mod cli;
pub mod design_estimators;
pub mod error;
pub mod output;
pub mod pipeline;
pub mod ppi;
pub mod propensity;
pub mod qis;
pub mod regression;
pub mod simulate;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    EstimateWithCI, EstimatorOptions, EstimatorTag, FinitePopulation, LabelingDesign,
    PredictionTerm, VarianceForm,
};
