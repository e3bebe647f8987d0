//! Maximum-likelihood logistic regression by IRLS with step-halving.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::special::{normal_two_sided, sigmoid};

const MAX_ITER: usize = 100;
const STEP_TOL: f64 = 1e-10;
const SCORE_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogisticFit {
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub wald_z: Vec<f64>,
    pub p_values: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    pub score_norm: f64,
    /// Inverse observed information, row-major.
    #[serde(skip)]
    pub covariance: Vec<f64>,
}

impl LogisticFit {
    pub fn predict(&self, row: &[f64]) -> f64 {
        sigmoid(row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum())
    }

    /// Standard error of the linear predictor at `row` (delta method).
    pub fn linear_predictor_se(&self, row: &[f64]) -> f64 {
        let p = self.coefficients.len();
        let mut var = 0.0;
        for i in 0..p {
            for j in 0..p {
                var += row[i] * self.covariance[i * p + j] * row[j];
            }
        }
        var.max(0.0).sqrt()
    }
}

fn log_likelihood(eta: &DVector<f64>, y: &[f64]) -> f64 {
    // y·η − log(1 + e^η), evaluated without overflow
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| {
            let softplus = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            yi * e - softplus
        })
        .sum()
}

/// Fits P(y = 1 | x) = σ(xᵀβ). `design` rows must already include the
/// intercept column.
pub fn logistic_fit(design: &[Vec<f64>], labels: &[u8]) -> Result<LogisticFit> {
    let n = design.len();
    if n != labels.len() {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: labels.len(),
        });
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let p = design[0].len();
    if design.iter().any(|r| r.len() != p) {
        return Err(Error::SingularDesign("ragged design matrix".into()));
    }
    if n <= p {
        return Err(Error::SingularDesign(format!("{n} rows for {p} coefficients")));
    }
    let x = DMatrix::from_fn(n, p, |i, j| design[i][j]);
    for j in 0..p {
        let col = x.column(j);
        let first = col[0];
        let constant = col.iter().all(|&v| v == first);
        let is_intercept = constant && first == 1.0;
        if constant && !is_intercept {
            return Err(Error::SingularDesign(format!("column {j} is constant")));
        }
    }
    let xtx = x.transpose() * &x;
    if xtx.clone().cholesky().is_none() {
        return Err(Error::SingularDesign("columns are linearly dependent".into()));
    }

    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    let yv = DVector::from_column_slice(&y);
    let mut beta = DVector::zeros(p);
    let mut eta = &x * &beta;
    let mut ll = log_likelihood(&eta, &y);
    let mut converged = false;
    let mut iterations = 0;

    let information = |eta: &DVector<f64>| -> (DVector<f64>, DMatrix<f64>) {
        let mu = eta.map(sigmoid);
        let w = mu.map(|m| m * (1.0 - m));
        let score = x.transpose() * (&yv - &mu);
        let mut xw = x.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= w[i];
        }
        (score, x.transpose() * xw)
    };

    for it in 1..=MAX_ITER {
        iterations = it;
        let (score, info) = information(&eta);
        let step = match info.clone().cholesky() {
            Some(ch) => ch.solve(&score),
            None => return Err(Error::Separation),
        };
        let mut scale = 1.0;
        let mut accepted = None;
        while scale > 1e-12 {
            let candidate = &beta + &step * scale;
            let cand_eta = &x * &candidate;
            let cand_ll = log_likelihood(&cand_eta, &y);
            if cand_ll >= ll - 1e-12 * ll.abs() {
                accepted = Some((candidate, cand_eta, cand_ll));
                break;
            }
            scale *= 0.5;
        }
        let Some((candidate, cand_eta, cand_ll)) = accepted else {
            break;
        };
        let moved = (&step * scale).amax();
        beta = candidate;
        eta = cand_eta;
        ll = cand_ll;
        if moved < STEP_TOL {
            converged = true;
            break;
        }
    }

    let (score, info) = information(&eta);
    let score_norm = score.norm();
    let max_eta = eta.amax();
    if ll > -1e-6 * n as f64 || (!converged && max_eta > 30.0) {
        return Err(Error::Separation);
    }
    let cov = match info.cholesky() {
        Some(ch) => ch.inverse(),
        None => return Err(Error::Separation),
    };
    let converged = converged && score_norm < SCORE_TOL;

    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let standard_errors: Vec<f64> = (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let wald_z: Vec<f64> = coefficients
        .iter()
        .zip(&standard_errors)
        .map(|(b, s)| b / s)
        .collect();
    let p_values = wald_z.iter().map(|&z| normal_two_sided(z)).collect();
    let covariance = (0..p * p).map(|k| cov[(k / p, k % p)]).collect();
    Ok(LogisticFit {
        coefficients,
        standard_errors,
        wald_z,
        p_values,
        converged,
        iterations,
        log_likelihood: ll,
        score_norm,
        covariance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn separable_design_is_rejected() {
        let design: Vec<Vec<f64>> = (0..8).map(|i| vec![1.0, i as f64]).collect();
        let labels = [0, 0, 0, 0, 1, 1, 1, 1];
        assert!(matches!(logistic_fit(&design, &labels), Err(Error::Separation)));
    }

    #[test]
    fn constant_regressor_is_singular() {
        let design: Vec<Vec<f64>> = (0..8).map(|_| vec![1.0, 2.0]).collect();
        let labels = [0, 1, 0, 1, 0, 1, 0, 1];
        assert!(matches!(logistic_fit(&design, &labels), Err(Error::SingularDesign(_))));
    }

    #[test]
    fn intercept_only_matches_log_odds() {
        let design: Vec<Vec<f64>> = (0..10).map(|_| vec![1.0]).collect();
        let labels = [1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
        let fit = logistic_fit(&design, &labels).unwrap();
        assert!((fit.coefficients[0] - (0.3f64 / 0.7).ln()).abs() < 1e-10);
        // se of log-odds is 1/sqrt(n p (1-p))
        assert!((fit.standard_errors[0] - 1.0 / (10.0f64 * 0.21).sqrt()).abs() < 1e-9);
        assert!(fit.converged);
    }

    #[test]
    fn score_vanishes_at_optimum() {
        let mut rng = Rng::new(5);
        let design: Vec<Vec<f64>> = (0..2000)
            .map(|_| vec![1.0, rng.uniform() * 5.0, f64::from(u8::from(rng.uniform() < 0.5))])
            .collect();
        let labels: Vec<u8> = design
            .iter()
            .map(|r| u8::from(rng.uniform() < sigmoid(-1.0 + 0.5 * r[1] + 0.4 * r[2])))
            .collect();
        let fit = logistic_fit(&design, &labels).unwrap();
        assert!(fit.converged);
        assert!(fit.score_norm < 1e-8);
        for (b, truth) in fit.coefficients.iter().zip([-1.0, 0.5, 0.4]) {
            assert!((b - truth).abs() < 0.4);
        }
    }
}
