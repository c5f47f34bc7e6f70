//! Least-squares plumbing shared by GREG, the outcome model and the OLS trainer.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative threshold on `|R_jj|` below which a QR factor is rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Prepends a column of ones.
pub fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = x.shape();
    DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] })
}

/// Selects `rows` of `x`, keeping column order.
pub fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

/// Solves `min Σ wᵢ (yᵢ − aᵢᵀβ)²` by Householder QR of the `√w`-scaled system.
///
/// `design` is used as given (add the intercept column beforehand if wanted).
pub fn weighted_least_squares(
    design: &DMatrix<f64>,
    y: &[f64],
    weights: Option<&[f64]>,
) -> Result<DVector<f64>> {
    let (n, p) = design.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            what: "regression response",
            expected: n,
            found: y.len(),
        });
    }
    if n < p {
        return Err(Error::InsufficientLabels { needed: p, found: n });
    }
    let sqrt_w: Vec<f64> = match weights {
        Some(w) => w.iter().map(|wi| wi.sqrt()).collect(),
        None => vec![1.0; n],
    };
    let a = DMatrix::from_fn(n, p, |i, j| design[(i, j)] * sqrt_w[i]);
    let b = DVector::from_iterator(n, y.iter().zip(&sqrt_w).map(|(yi, s)| yi * s));

    let qr = a.qr();
    let r = qr.r();
    let max_diag = (0..p).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    if p > 0 && (0..p).any(|j| r[(j, j)].abs() <= RANK_TOL * max_diag.max(f64::MIN_POSITIVE)) {
        return Err(Error::SingularInformation);
    }
    let qtb = qr.q().transpose() * b;
    r.solve_upper_triangular(&qtb)
        .ok_or(Error::SingularInformation)
}

/// Ordinary least squares with an intercept; coefficients intercept first.
pub fn ols_with_intercept(x: &DMatrix<f64>, y: &[f64]) -> Result<DVector<f64>> {
    weighted_least_squares(&with_intercept(x), y, None)
}

/// `β₀ + xᵢᵀβ` for every row.
pub fn linear_predictor(x: &DMatrix<f64>, coefficients: &[f64]) -> Vec<f64> {
    (0..x.nrows())
        .map(|i| {
            coefficients[0]
                + (0..x.ncols())
                    .map(|j| x[(i, j)] * coefficients[j + 1])
                    .sum::<f64>()
        })
        .collect()
}
