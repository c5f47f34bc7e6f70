//! Logistic propensity model for the inclusion probabilities, fitted by IRLS.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-10;
/// Lower clamp on fitted probabilities so `1/ξ̂` stays finite.
pub const XI_FLOOR: f64 = 1e-6;

/// Below this max-abs step the Newton iterate is in its quadratic regime and
/// the line search is skipped (log-likelihood changes drown in rounding).
const LINE_SEARCH_MIN_STEP: f64 = 1e-6;
const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    /// Intercept first, then one slope per covariate column.
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub n_iterations: usize,
    /// Log-likelihood at the start value and after every accepted step.
    pub log_likelihood: Vec<f64>,
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn eta(x: &DMatrix<f64>, beta: &DVector<f64>, i: usize) -> f64 {
    let mut z = beta[0];
    for j in 0..x.ncols() {
        z += x[(i, j)] * beta[j + 1];
    }
    z
}

fn log_likelihood(x: &DMatrix<f64>, response: &[bool], beta: &DVector<f64>) -> f64 {
    response
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let z = eta(x, beta, i);
            if r {
                z - softplus(z)
            } else {
                -softplus(z)
            }
        })
        .sum()
}

/// Fits `P(R = 1 | x) = σ(β₀ + xᵀβ)` by Newton–Raphson (IRLS) with step
/// halving, so the log-likelihood never decreases between accepted steps.
///
/// `converged` is true iff the max absolute coefficient update fell below
/// `tol` within `max_iter` iterations. Separable data yields
/// `converged = false` with diverging coefficients rather than an error.
pub fn fit_logistic(
    x: &DMatrix<f64>,
    response: &[bool],
    max_iter: usize,
    tol: f64,
) -> Result<LogisticModel> {
    let (n, p) = x.shape();
    if response.len() != n {
        return Err(Error::DimensionMismatch {
            what: "logistic response",
            expected: n,
            found: response.len(),
        });
    }
    let n_pos = response.iter().filter(|&&r| r).count();
    if n_pos == 0 || n_pos == n {
        return Err(Error::DegenerateResponse);
    }
    let k = p + 1;
    let mut beta = DVector::zeros(k);
    let mut ll = log_likelihood(x, response, &beta);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;

    let mut row = vec![0.0; k];
    while iterations < max_iter {
        iterations += 1;
        let mut info = DMatrix::<f64>::zeros(k, k);
        let mut grad = DVector::<f64>::zeros(k);
        for i in 0..n {
            let mu = sigmoid(eta(x, &beta, i));
            let w = mu * (1.0 - mu);
            let resid = if response[i] { 1.0 - mu } else { -mu };
            row[0] = 1.0;
            for j in 0..p {
                row[j + 1] = x[(i, j)];
            }
            for a in 0..k {
                grad[a] += row[a] * resid;
                for b in 0..=a {
                    info[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                info[(b, a)] = info[(a, b)];
            }
        }

        let step = match solve_information(info, &grad) {
            Some(s) => s,
            // fitted probabilities saturated on separable data
            None if iterations > 1 => break,
            None => return Err(Error::SingularInformation),
        };
        let max_step = step.amax();
        if !max_step.is_finite() {
            break;
        }

        if max_step < LINE_SEARCH_MIN_STEP {
            beta += &step;
            ll = log_likelihood(x, response, &beta);
            trace.push(ll);
            if max_step < tol {
                converged = true;
                break;
            }
            continue;
        }

        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let candidate = &beta + &step * scale;
            let cand_ll = log_likelihood(x, response, &candidate);
            if cand_ll >= ll {
                beta = candidate;
                ll = cand_ll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
        trace.push(ll);
        if max_step * scale < tol {
            converged = true;
            break;
        }
    }

    Ok(LogisticModel {
        coefficients: beta.iter().copied().collect(),
        converged,
        n_iterations: iterations,
        log_likelihood: trace,
    })
}

fn solve_information(info: DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = info.diagonal().amax();
    if scale.is_nan() || scale <= 0.0 {
        return None;
    }
    // Cholesky fails on numerically indefinite or singular information
    let chol = info.cholesky()?;
    let l = chol.l();
    let min_pivot = l.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min_pivot * min_pivot <= 1e-13 * scale {
        return None;
    }
    Some(chol.solve(grad))
}

impl LogisticModel {
    pub fn dimension(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// Unclamped fitted probabilities.
    pub fn probabilities(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.check_dimension(x)?;
        let beta = DVector::from_column_slice(&self.coefficients);
        Ok((0..x.nrows()).map(|i| sigmoid(eta(x, &beta, i))).collect())
    }

    fn check_dimension(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.dimension() {
            return Err(Error::DimensionMismatch {
                what: "propensity covariates",
                expected: self.dimension(),
                found: x.ncols(),
            });
        }
        Ok(())
    }
}

/// `σ(β₀ + xᵢᵀβ)` clamped to `[XI_FLOOR, 1]`.
pub fn predict_xi(model: &LogisticModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(model
        .probabilities(x)?
        .into_iter()
        .map(|p| p.clamp(XI_FLOOR, 1.0))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn zero_coefficients_give_half() {
        let m = LogisticModel {
            coefficients: vec![0.0, 0.0],
            converged: true,
            n_iterations: 0,
            log_likelihood: vec![],
        };
        let xi = predict_xi(&m, &col(&[-3.0, 0.0, 10.0])).unwrap();
        assert_eq!(xi, vec![0.5; 3]);
    }

    #[test]
    fn age_sixty_gives_half() {
        let m = LogisticModel {
            coefficients: vec![3.0, -0.05],
            converged: true,
            n_iterations: 0,
            log_likelihood: vec![],
        };
        let xi = predict_xi(&m, &col(&[60.0])).unwrap();
        assert!((xi[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn clamped_at_floor() {
        let m = LogisticModel {
            coefficients: vec![-40.0, 0.0],
            converged: true,
            n_iterations: 0,
            log_likelihood: vec![],
        };
        let xi = predict_xi(&m, &col(&[0.0, 1.0])).unwrap();
        assert_eq!(xi, vec![XI_FLOOR; 2]);
    }

    #[test]
    fn dimension_mismatch() {
        let m = LogisticModel {
            coefficients: vec![0.0, 1.0],
            converged: true,
            n_iterations: 0,
            log_likelihood: vec![],
        };
        let x = DMatrix::zeros(3, 2);
        assert!(matches!(predict_xi(&m, &x), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn degenerate_response() {
        let x = col(&[0.0, 1.0, 2.0]);
        assert!(matches!(
            fit_logistic(&x, &[true, true, true], 100, 1e-10),
            Err(Error::DegenerateResponse)
        ));
        assert!(matches!(
            fit_logistic(&x, &[false; 3], 100, 1e-10),
            Err(Error::DegenerateResponse)
        ));
    }

    #[test]
    fn collinear_columns_are_singular() {
        let x = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let r = [false, true, false, true];
        assert!(matches!(fit_logistic(&x, &r, 100, 1e-10), Err(Error::SingularInformation)));
    }

    #[test]
    fn null_model_recovers_logit_of_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 4000;
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        // labels independent of x, balanced
        let r: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let m = fit_logistic(&col(&x), &r, 100, 1e-10).unwrap();
        assert!(m.converged);
        assert!((m.coefficients[0] - logit(0.5)).abs() < 0.05);
        assert!(m.coefficients[1].abs() < 0.1);
    }

    #[test]
    fn intercept_only_fit_is_exact_logit() {
        let x = DMatrix::zeros(10, 0);
        let r: Vec<bool> = (0..10).map(|i| i < 3).collect();
        let m = fit_logistic(&x, &r, 100, 1e-10).unwrap();
        assert!(m.converged);
        assert!((m.coefficients[0] - logit(0.3)).abs() < 1e-10);
    }

    #[test]
    fn log_likelihood_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 300;
        let x: Vec<f64> = (0..n).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let r: Vec<bool> = x.iter().map(|&xi| rng.random::<f64>() < sigmoid(1.0 + 2.0 * xi)).collect();
        let m = fit_logistic(&col(&x), &r, 100, 1e-10).unwrap();
        assert!(m.converged);
        for w in m.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn separable_data_does_not_converge() {
        let x = col(&[-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]);
        let r = [false, false, false, true, true, true];
        let m = fit_logistic(&x, &r, 100, 1e-10).unwrap();
        assert!(!m.converged);
        assert!(m.coefficients[1] > 5.0);
        let xi = predict_xi(&m, &x).unwrap();
        assert!(xi.iter().all(|&p| (XI_FLOOR..=1.0).contains(&p)));
        for w in m.log_likelihood.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn duplicated_rows_leave_fit_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200;
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let r: Vec<bool> = x.iter().map(|&xi| rng.random::<f64>() < sigmoid(0.3 - 0.8 * xi)).collect();
        let base = fit_logistic(&col(&x), &r, 100, 1e-10).unwrap();
        for k in [2usize, 3] {
            let xd: Vec<f64> = x.iter().flat_map(|&v| std::iter::repeat_n(v, k)).collect();
            let rd: Vec<bool> = r.iter().flat_map(|&v| std::iter::repeat_n(v, k)).collect();
            let dup = fit_logistic(&col(&xd), &rd, 100, 1e-10).unwrap();
            for (a, b) in base.coefficients.iter().zip(&dup.coefficients) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }
}
