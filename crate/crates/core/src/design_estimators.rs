//! Design-based estimators of the finite-population mean.
//!
//! Variance formulas, for labeled contributions `zᵢ`, inclusion probabilities
//! `ξᵢ` and normalizer `D` (`N` for HT-type, `N̂ = Σ Rᵢ/ξᵢ` for Hájek-type):
//!
//! * [`VarianceForm::Poisson`]: `D⁻² Σ Rᵢ (1 − ξᵢ) zᵢ² / ξᵢ²`
//! * [`VarianceForm::Superpopulation`]: `N s² / D²`, with `s²` the sample
//!   variance of the `N` values `Rᵢ zᵢ / ξᵢ` (zero for unlabeled units).
//!
//! HT uses `zᵢ = Yᵢ`; Hájek linearizes with `zᵢ = Yᵢ − θ̂`; GREG applies the
//! HT form to regression residuals; binning–smoothing applies the HT form with
//! `ξᵢ` replaced by the bin midpoint.

use std::cmp::Ordering;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::regression::weighted_least_squares;
use crate::types::{
    mean, sample_variance, EstimateWithCI, EstimatorOptions, EstimatorTag, FinitePopulation,
    LabelingDesign, VarianceForm,
};

/// Variance of `D⁻¹ Σ Rᵢ zᵢ / ξᵢ`; `terms` yields `(zᵢ, ξᵢ)` for labeled units.
pub(crate) fn ipw_variance<I>(terms: I, n_units: usize, normalizer: f64, form: VarianceForm) -> f64
where
    I: IntoIterator<Item = (f64, f64)>,
{
    match form {
        VarianceForm::Poisson => {
            let s: f64 = terms
                .into_iter()
                .map(|(z, xi)| (1.0 - xi) * z * z / (xi * xi))
                .sum();
            s / (normalizer * normalizer)
        }
        VarianceForm::Superpopulation => {
            if n_units < 2 {
                return 0.0;
            }
            let values: Vec<f64> = terms.into_iter().map(|(z, xi)| z / xi).collect();
            let n = n_units as f64;
            let m = values.iter().sum::<f64>() / n;
            let unlabeled = (n_units - values.len()) as f64;
            let ss = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() + unlabeled * m * m;
            n * (ss / (n - 1.0)) / (normalizer * normalizer)
        }
    }
}

fn check_inputs(pop: &FinitePopulation, design: &LabelingDesign, needed: usize) -> Result<()> {
    design.check_matches(pop)?;
    design.require_labels(needed)
}

/// Unweighted mean of the labeled outcomes with `s / √n_lab` standard error.
pub fn classic_mean(
    pop: &FinitePopulation,
    design: &LabelingDesign,
    opts: &EstimatorOptions,
) -> Result<EstimateWithCI> {
    check_inputs(pop, design, 2)?;
    let y: Vec<f64> = design
        .labeled_indices()
        .into_iter()
        .map(|i| pop.outcomes()[i])
        .collect();
    let n = y.len() as f64;
    Ok(EstimateWithCI::from_variance(
        EstimatorTag::Classic,
        mean(&y),
        sample_variance(&y) / n,
        opts.level,
    ))
}

/// Horvitz–Thompson: `N⁻¹ Σ Rᵢ Yᵢ / ξᵢ`.
pub fn horvitz_thompson(
    pop: &FinitePopulation,
    design: &LabelingDesign,
    opts: &EstimatorOptions,
) -> Result<EstimateWithCI> {
    check_inputs(pop, design, 1)?;
    let n = pop.n_units();
    let (y, xi) = (pop.outcomes(), design.inclusion_probs());
    let lab = design.labeled_indices();
    let estimate = lab.iter().map(|&i| y[i] / xi[i]).sum::<f64>() / n as f64;
    let var = ipw_variance(lab.iter().map(|&i| (y[i], xi[i])), n, n as f64, opts.variance);
    Ok(EstimateWithCI::from_variance(EstimatorTag::HT, estimate, var, opts.level))
}

/// Hájek ratio: `(Σ Rᵢ Yᵢ/ξᵢ) / (Σ Rᵢ/ξᵢ)`.
pub fn hajek(
    pop: &FinitePopulation,
    design: &LabelingDesign,
    opts: &EstimatorOptions,
) -> Result<EstimateWithCI> {
    check_inputs(pop, design, 1)?;
    let (estimate, var) = hajek_parts(pop.outcomes(), design, opts.variance);
    Ok(EstimateWithCI::from_variance(EstimatorTag::Hajek, estimate, var, opts.level))
}

/// Hájek point estimate and linearized variance of `values` over labeled units.
pub(crate) fn hajek_parts(values: &[f64], design: &LabelingDesign, form: VarianceForm) -> (f64, f64) {
    let xi = design.inclusion_probs();
    let lab = design.labeled_indices();
    let n_hat: f64 = lab.iter().map(|&i| 1.0 / xi[i]).sum();
    let estimate = lab.iter().map(|&i| values[i] / xi[i]).sum::<f64>() / n_hat;
    let var = ipw_variance(
        lab.iter().map(|&i| (values[i] - estimate, xi[i])),
        design.len(),
        n_hat,
        form,
    );
    (estimate, var)
}

/// Generalized regression estimator on the mean scale,
/// `θ̂_HT + β̂ᵀ(x̄ − x̄_HT)` with `x` augmented by an intercept.
///
/// `β̂` is the `1/ξ`-weighted least-squares fit of `Y` on `(1, X)` over the
/// labeled units. Covariates that are constant among labeled units get slope 0.
pub fn greg(
    pop: &FinitePopulation,
    design: &LabelingDesign,
    opts: &EstimatorOptions,
) -> Result<EstimateWithCI> {
    let beta = greg_coefficients(pop, design)?;
    greg_with_coefficients(pop, design, &beta, opts)
}

/// The weighted regression coefficients used by [`greg`], intercept first.
pub fn greg_coefficients(pop: &FinitePopulation, design: &LabelingDesign) -> Result<Vec<f64>> {
    let p = pop.n_covariates();
    check_inputs(pop, design, p + 2)?;
    let x = pop.covariates();
    let lab = design.labeled_indices();
    let active: Vec<usize> = (0..p)
        .filter(|&j| {
            let first = x[(lab[0], j)];
            lab.iter().any(|&i| x[(i, j)] != first)
        })
        .collect();
    let a = DMatrix::from_fn(lab.len(), active.len() + 1, |r, c| {
        if c == 0 {
            1.0
        } else {
            x[(lab[r], active[c - 1])]
        }
    });
    let y: Vec<f64> = lab.iter().map(|&i| pop.outcomes()[i]).collect();
    let w: Vec<f64> = lab.iter().map(|&i| 1.0 / design.inclusion_probs()[i]).collect();
    let fit = weighted_least_squares(&a, &y, Some(&w))?;
    let mut beta = vec![0.0; p + 1];
    beta[0] = fit[0];
    for (c, &j) in active.iter().enumerate() {
        beta[j + 1] = fit[c + 1];
    }
    Ok(beta)
}

/// GREG with caller-supplied coefficients (intercept first). With `β = 0`
/// this is exactly [`horvitz_thompson`].
pub fn greg_with_coefficients(
    pop: &FinitePopulation,
    design: &LabelingDesign,
    beta: &[f64],
    opts: &EstimatorOptions,
) -> Result<EstimateWithCI> {
    check_inputs(pop, design, 1)?;
    let p = pop.n_covariates();
    if beta.len() != p + 1 {
        return Err(Error::DimensionMismatch {
            what: "GREG coefficients",
            expected: p + 1,
            found: beta.len(),
        });
    }
    let n = pop.n_units();
    let nf = n as f64;
    let (x, y, xi) = (pop.covariates(), pop.outcomes(), design.inclusion_probs());
    let lab = design.labeled_indices();

    let ht = lab.iter().map(|&i| y[i] / xi[i]).sum::<f64>() / nf;
    let n_hat_ratio = lab.iter().map(|&i| 1.0 / xi[i]).sum::<f64>() / nf;
    let mut adjustment = beta[0] * (1.0 - n_hat_ratio);
    for j in 0..p {
        let col = x.column(j);
        let true_mean = col.sum() / nf;
        let ht_mean = lab.iter().map(|&i| col[i] / xi[i]).sum::<f64>() / nf;
        adjustment += beta[j + 1] * (true_mean - ht_mean);
    }
    let fitted = |i: usize| beta[0] + (0..p).map(|j| beta[j + 1] * x[(i, j)]).sum::<f64>();
    let var = ipw_variance(
        lab.iter().map(|&i| (y[i] - fitted(i), xi[i])),
        n,
        nf,
        opts.variance,
    );
    Ok(EstimateWithCI::from_variance(EstimatorTag::GREG, ht + adjustment, var, opts.level))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BinStrategy {
    #[default]
    EqualWidth,
    EqualCount,
}

impl FromStr for BinStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "equalwidth" | "width" => Ok(BinStrategy::EqualWidth),
            "equalcount" | "count" => Ok(BinStrategy::EqualCount),
            _ => Err(Error::InvalidArgument(format!("unknown bin strategy '{s}'"))),
        }
    }
}

/// Bins `[a₁, a₂), …, [a_B, a_{B+1}]` over inclusion probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct BinSpec {
    edges: Vec<f64>,
    midpoints: Vec<f64>,
}

impl BinSpec {
    /// Edges must be strictly increasing, except a single degenerate bin `[v, v]`.
    pub fn from_edges(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::InvalidArgument("bin spec needs at least two edges".into()));
        }
        let degenerate = edges.len() == 2 && edges[0] == edges[1];
        if !degenerate && edges.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(Ordering::Less)) {
            return Err(Error::InvalidArgument("bin edges must be strictly increasing".into()));
        }
        if edges.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err(Error::InvalidArgument("bin edges must lie in (0, 1]".into()));
        }
        let midpoints = edges.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
        Ok(Self { edges, midpoints })
    }

    pub fn n_bins(&self) -> usize {
        self.midpoints.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn midpoints(&self) -> &[f64] {
        &self.midpoints
    }

    /// Bin index of `value`; the last bin is right-closed.
    pub fn bin_of(&self, value: f64) -> Option<usize> {
        let last = *self.edges.last()?;
        if value < self.edges[0] || value > last {
            return None;
        }
        let idx = self.edges.partition_point(|&e| e <= value);
        Some(idx.saturating_sub(1).min(self.n_bins() - 1))
    }
}

/// Partitions the range of `xi` into `n_bins` bins.
///
/// An all-equal `xi` yields a single bin whose midpoint is that value.
/// Equal-count edges that coincide (ties) are merged, so fewer bins can result.
pub fn make_bins(xi: &[f64], n_bins: usize, strategy: BinStrategy) -> Result<BinSpec> {
    if xi.is_empty() {
        return Err(Error::InvalidArgument("cannot bin an empty probability vector".into()));
    }
    if n_bins == 0 {
        return Err(Error::InvalidArgument("number of bins must be positive".into()));
    }
    let lo = xi.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return BinSpec::from_edges(vec![lo, hi]);
    }
    let mut edges = match strategy {
        BinStrategy::EqualWidth => {
            let width = (hi - lo) / n_bins as f64;
            let mut e: Vec<f64> = (0..n_bins).map(|b| lo + width * b as f64).collect();
            e.push(hi);
            e
        }
        BinStrategy::EqualCount => {
            let mut sorted = xi.to_vec();
            sorted.sort_by(f64::total_cmp);
            let n = sorted.len();
            let mut e = vec![lo];
            e.extend((1..n_bins).map(|b| sorted[b * n / n_bins]));
            e.push(hi);
            e
        }
    };
    edges.dedup();
    BinSpec::from_edges(edges)
}

/// `⌈√n_lab⌉` equal-width bins over all units' inclusion probabilities.
pub fn default_bins(design: &LabelingDesign) -> Result<BinSpec> {
    let b = (design.n_lab() as f64).sqrt().ceil().max(1.0) as usize;
    make_bins(design.inclusion_probs(), b, BinStrategy::EqualWidth)
}

/// Binning–smoothing estimator: HT with each `ξᵢ` replaced by its bin midpoint,
/// averaged over bins with weights `n_b / N` (`n_b` = units in bin `b`).
pub fn bin_smooth(
    pop: &FinitePopulation,
    design: &LabelingDesign,
    spec: &BinSpec,
    opts: &EstimatorOptions,
) -> Result<EstimateWithCI> {
    check_inputs(pop, design, 1)?;
    let n = pop.n_units();
    let mut smoothed = Vec::with_capacity(n);
    for (index, &value) in design.inclusion_probs().iter().enumerate() {
        let b = spec.bin_of(value).ok_or(Error::BinCoverage { index, value })?;
        smoothed.push(spec.midpoints()[b]);
    }
    let y = pop.outcomes();
    let nb = spec.n_bins();
    let mut bin_units = vec![0usize; nb];
    let mut bin_sums = vec![0.0; nb];
    for i in 0..n {
        let b = spec.bin_of(design.inclusion_probs()[i]).expect("checked above");
        bin_units[b] += 1;
        if design.is_labeled(i) {
            bin_sums[b] += y[i] / smoothed[i];
        }
    }
    let estimate: f64 = (0..nb)
        .filter(|&b| bin_units[b] > 0)
        .map(|b| (bin_units[b] as f64 / n as f64) * (bin_sums[b] / bin_units[b] as f64))
        .sum();
    let lab = design.labeled_indices();
    let var = ipw_variance(lab.iter().map(|&i| (y[i], smoothed[i])), n, n as f64, opts.variance);
    Ok(EstimateWithCI::from_variance(EstimatorTag::BinSmooth, estimate, var, opts.level))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::normal_quantile;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn opts() -> EstimatorOptions {
        EstimatorOptions::default()
    }

    fn pop_y(y: &[f64]) -> FinitePopulation {
        let x: Vec<f64> = (0..y.len()).map(|i| i as f64).collect();
        FinitePopulation::from_column(&x, y.to_vec(), None).unwrap()
    }

    #[test]
    fn classic_constant_outcomes() {
        let pop = pop_y(&[1.0, 1.0, 1.0]);
        let d = LabelingDesign::new(vec![0.5; 3], &[1.0, 1.0, 1.0]).unwrap();
        let e = classic_mean(&pop, &d, &opts()).unwrap();
        assert_eq!(e.estimate, 1.0);
        assert_eq!(e.std_error, 0.0);
        assert!(e.is_degenerate());
        assert_eq!(e.width(), 0.0);
    }

    #[test]
    fn classic_two_points() {
        let pop = pop_y(&[0.0, 1.0]);
        let d = LabelingDesign::new(vec![0.5; 2], &[1.0, 1.0]).unwrap();
        let e = classic_mean(&pop, &d, &opts()).unwrap();
        assert_eq!(e.estimate, 0.5);
        assert!((e.std_error - 0.5).abs() < 1e-15);
        let z = normal_quantile(0.95);
        assert!((e.ci_upper - (0.5 + z * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn classic_needs_two_labels() {
        let pop = pop_y(&[0.0, 1.0]);
        let d = LabelingDesign::new(vec![0.5; 2], &[1.0, 0.0]).unwrap();
        assert!(matches!(classic_mean(&pop, &d, &opts()), Err(Error::InsufficientLabels { .. })));
        let d0 = LabelingDesign::new(vec![0.5; 2], &[0.0, 0.0]).unwrap();
        assert!(matches!(classic_mean(&pop, &d0, &opts()), Err(Error::NoLabeledUnits)));
        assert!(matches!(horvitz_thompson(&pop, &d0, &opts()), Err(Error::NoLabeledUnits)));
        assert!(matches!(hajek(&pop, &d0, &opts()), Err(Error::NoLabeledUnits)));
    }

    #[test]
    fn mismatched_design_rejected() {
        let pop = pop_y(&[0.0, 1.0]);
        let d = LabelingDesign::new(vec![0.5; 3], &[1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(horvitz_thompson(&pop, &d, &opts()), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn ht_census() {
        let pop = pop_y(&[1.0, 2.0, 3.0, 6.0]);
        let d = LabelingDesign::new(vec![1.0; 4], &[1.0; 4]).unwrap();
        let e = horvitz_thompson(&pop, &d, &opts()).unwrap();
        assert_eq!(e.estimate, 3.0);
        assert_eq!(e.std_error, 0.0);
    }

    #[test]
    fn ht_enumeration_n4() {
        // E over all 16 equally likely patterns
        let pop = pop_y(&[1.0, 2.0, 3.0, 4.0]);
        let mut expectation = 0.0;
        for mask in 0u32..16 {
            let r: Vec<f64> = (0..4).map(|i| ((mask >> i) & 1) as f64).collect();
            let est: f64 = (0..4).map(|i| r[i] * pop.outcomes()[i] / 0.5).sum::<f64>() / 4.0;
            if mask != 0 {
                let d = LabelingDesign::new(vec![0.5; 4], &r).unwrap();
                let e = horvitz_thompson(&pop, &d, &opts()).unwrap();
                assert!((e.estimate - est).abs() < 1e-15);
            }
            expectation += est / 16.0;
        }
        assert!((expectation - 2.5).abs() < 1e-15);
    }

    #[test]
    fn hajek_hand_example() {
        let pop = pop_y(&[1.0, 2.0, 7.0]);
        let d = LabelingDesign::new(vec![0.9, 0.1, 0.5], &[1.0, 1.0, 0.0]).unwrap();
        let e = hajek(&pop, &d, &opts()).unwrap();
        assert!((e.estimate - 1.9).abs() < 1e-12);
    }

    #[test]
    fn hajek_equals_classic_under_constant_xi() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y: Vec<f64> = (0..40).map(|_| rng.random::<f64>() * 10.0).collect();
        let r: Vec<f64> = (0..40).map(|i| (i % 3 == 0) as u8 as f64).collect();
        let pop = pop_y(&y);
        let d = LabelingDesign::new(vec![0.37; 40], &r).unwrap();
        let h = hajek(&pop, &d, &opts()).unwrap();
        let c = classic_mean(&pop, &d, &opts()).unwrap();
        assert!((h.estimate - c.estimate).abs() < 1e-12);
    }

    #[test]
    fn poisson_variance_formula() {
        let pop = pop_y(&[1.0, 2.0, 7.0]);
        let d = LabelingDesign::new(vec![0.9, 0.1, 0.5], &[1.0, 1.0, 0.0]).unwrap();
        let e = horvitz_thompson(&pop, &d, &opts()).unwrap();
        let v: f64 = (0.1 * 1.0 / 0.81 + 0.9 * 4.0 / 0.01) / 9.0;
        assert!((e.std_error - v.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn superpopulation_variance_formula() {
        let pop = pop_y(&[1.0, 2.0, 7.0]);
        let d = LabelingDesign::new(vec![0.9, 0.1, 0.5], &[1.0, 1.0, 0.0]).unwrap();
        let o = opts().with_variance(VarianceForm::Superpopulation);
        let e = horvitz_thompson(&pop, &d, &o).unwrap();
        let z = [1.0 / 0.9, 2.0 / 0.1, 0.0];
        let v = sample_variance(&z) / 3.0;
        assert!((e.std_error - v.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn greg_exact_on_linear_outcomes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 30;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>() * 5.0]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 1.5 - 2.0 * r[0] + 0.7 * r[1]).collect();
        let pop = FinitePopulation::from_rows(&rows, y, None).unwrap();
        let xi: Vec<f64> = (0..n).map(|_| 0.2 + 0.6 * rng.random::<f64>()).collect();
        for seed in 0..5 {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let ind: Vec<f64> = xi.iter().map(|&p| (r.random::<f64>() < p) as u8 as f64).collect();
            let d = LabelingDesign::new(xi.clone(), &ind).unwrap();
            if d.n_lab() < 4 {
                continue;
            }
            let e = greg(&pop, &d, &opts()).unwrap();
            assert!((e.estimate - pop.outcome_mean()).abs() < 1e-10);
        }
    }

    #[test]
    fn greg_zero_coefficients_is_ht() {
        let pop = pop_y(&[1.0, 2.0, 7.0, 3.0]);
        let d = LabelingDesign::new(vec![0.9, 0.1, 0.5, 0.4], &[1.0, 1.0, 0.0, 1.0]).unwrap();
        let g = greg_with_coefficients(&pop, &d, &[0.0, 0.0], &opts()).unwrap();
        let h = horvitz_thompson(&pop, &d, &opts()).unwrap();
        assert_eq!(g.estimate, h.estimate);
        assert_eq!(g.std_error, h.std_error);
    }

    #[test]
    fn greg_constant_covariate_gets_zero_slope() {
        let x = [2.0; 6];
        let y = vec![1.0, 3.0, 2.0, 5.0, 4.0, 0.0];
        let pop = FinitePopulation::from_column(&x, y, None).unwrap();
        let d = LabelingDesign::new(vec![0.9, 0.2, 0.5, 0.4, 0.7, 0.3], &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        let beta = greg_coefficients(&pop, &d).unwrap();
        assert_eq!(beta[1], 0.0);
        // intercept calibration reduces to Hájek
        let g = greg(&pop, &d, &opts()).unwrap();
        let h = hajek(&pop, &d, &opts()).unwrap();
        assert!((g.estimate - h.estimate).abs() < 1e-12);
    }

    #[test]
    fn greg_needs_enough_labels() {
        let pop = pop_y(&[1.0, 2.0, 7.0]);
        let d = LabelingDesign::new(vec![0.5; 3], &[1.0, 1.0, 0.0]).unwrap();
        assert!(matches!(greg(&pop, &d, &opts()), Err(Error::InsufficientLabels { .. })));
    }

    #[test]
    fn equal_width_bins() {
        let b = make_bins(&[0.2, 0.4, 0.6, 0.8], 2, BinStrategy::EqualWidth).unwrap();
        assert_eq!(b.n_bins(), 2);
        assert!((b.edges()[1] - 0.5).abs() < 1e-15);
        assert_eq!(b.edges()[2], 0.8);
        assert!((b.midpoints()[0] - 0.35).abs() < 1e-15);
        assert!((b.midpoints()[1] - 0.65).abs() < 1e-15);
        assert_eq!(b.bin_of(0.8), Some(1));
        assert_eq!(b.bin_of(0.2), Some(0));
        assert_eq!(b.bin_of(0.5), Some(1));
        assert_eq!(b.bin_of(0.9), None);
    }

    #[test]
    fn degenerate_range_single_bin() {
        for nb in [1, 3, 10] {
            let b = make_bins(&[0.3; 5], nb, BinStrategy::EqualWidth).unwrap();
            assert_eq!(b.n_bins(), 1);
            assert_eq!(b.midpoints()[0], 0.3);
            assert_eq!(b.bin_of(0.3), Some(0));
        }
    }

    #[test]
    fn equal_count_bins() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xi: Vec<f64> = (0..100).map(|_| 0.05 + 0.9 * rng.random::<f64>()).collect();
        let b = make_bins(&xi, 10, BinStrategy::EqualCount).unwrap();
        assert_eq!(b.n_bins(), 10);
        let mut counts = [0; 10];
        for &v in &xi {
            counts[b.bin_of(v).unwrap()] += 1;
        }
        assert_eq!(counts, [10; 10]);
    }

    #[test]
    fn bin_coverage_error() {
        let pop = pop_y(&[1.0, 2.0]);
        let d = LabelingDesign::new(vec![0.2, 0.9], &[1.0, 1.0]).unwrap();
        let spec = BinSpec::from_edges(vec![0.1, 0.5]).unwrap();
        assert!(matches!(
            bin_smooth(&pop, &d, &spec, &opts()),
            Err(Error::BinCoverage { index: 1, .. })
        ));
    }

    #[test]
    fn single_bin_is_constant_probability_ht() {
        let pop = pop_y(&[1.0, 2.0, 7.0, 3.0, 5.0]);
        let xi = vec![0.3, 0.35, 0.4, 0.45, 0.5];
        let d = LabelingDesign::new(xi.clone(), &[1.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        let spec = make_bins(&xi, 1, BinStrategy::EqualWidth).unwrap();
        let p = spec.midpoints()[0];
        let e = bin_smooth(&pop, &d, &spec, &opts()).unwrap();
        let direct = (1.0 + 7.0 + 3.0) / p / 5.0;
        assert!((e.estimate - direct).abs() < 1e-12);
    }

    #[test]
    fn midpoint_probabilities_match_stratified_ht() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let spec = BinSpec::from_edges(vec![0.1, 0.3, 0.5, 0.7, 0.9]).unwrap();
        let mids = [0.2, 0.4, 0.6, 0.8];
        let n = 20;
        let strata: Vec<usize> = (0..n).map(|i| i % 4).collect();
        let xi: Vec<f64> = strata.iter().map(|&s| mids[s]).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 3.0).collect();
        let r: Vec<f64> = xi.iter().map(|&p| (rng.random::<f64>() < p) as u8 as f64).collect();
        let pop = pop_y(&y);
        let d = LabelingDesign::new(xi, &r).unwrap();
        let e = bin_smooth(&pop, &d, &spec, &opts()).unwrap();
        // stratified HT: Σ_h (N_h/N) · N_h⁻¹ Σ_{i∈h} Rᵢ Yᵢ / p_h
        let mut direct = 0.0;
        for (h, &mid) in mids.iter().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| strata[i] == h).collect();
            let nh = members.len() as f64;
            let total: f64 = members.iter().map(|&i| r[i] * y[i] / mid).sum();
            direct += (nh / n as f64) * total / nh;
        }
        assert!((e.estimate - direct).abs() < 1e-12);
    }

    #[test]
    fn one_bin_per_unit_is_ht() {
        // B = N bins, each unit's ξᵢ is its own bin midpoint
        let spec = BinSpec::from_edges(vec![0.1, 0.3, 0.5, 0.7, 0.9, 1.0]).unwrap();
        let xi = spec.midpoints().to_vec();
        let y = vec![3.0, -1.0, 2.0, 4.0, 0.5];
        let pop = pop_y(&y);
        let d = LabelingDesign::new(xi.clone(), &[1.0, 1.0, 0.0, 1.0, 1.0]).unwrap();
        let bs = bin_smooth(&pop, &d, &spec, &opts()).unwrap();
        let ht = horvitz_thompson(&pop, &d, &opts()).unwrap();
        let hand = (3.0 / xi[0] - 1.0 / xi[1] + 4.0 / xi[3] + 0.5 / xi[4]) / 5.0;
        assert!((bs.estimate - hand).abs() < 1e-12);
        assert!((ht.estimate - hand).abs() < 1e-12);
        assert!((bs.std_error - ht.std_error).abs() < 1e-12);
    }
}
