//! Maximum-likelihood logistic regression by iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::stats::sigmoid;

const MAX_ITER: usize = 25;
const TOL: f64 = 1e-8;
/// Linear predictors beyond this magnitude at the optimum indicate separation.
const SEPARATION_ETA: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LogisticModel {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(x)
                .map(|(b, v)| b * v)
                .sum::<f64>()
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        sigmoid(self.linear_predictor(x))
    }
}

#[derive(Debug, Clone)]
pub struct IrlsFit {
    pub model: LogisticModel,
    pub iterations: usize,
    pub converged: bool,
    pub separation: bool,
    pub warnings: Vec<String>,
}

fn log_likelihood(eta: &[f64], y: &[u8]) -> f64 {
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| {
            // y·η − log(1 + e^η), evaluated stably.
            let log1pexp = if e > 0.0 {
                e + (-e).exp().ln_1p()
            } else {
                e.exp().ln_1p()
            };
            f64::from(yi) * e - log1pexp
        })
        .sum()
}

/// Fit `logit P(y = 1) = b0 + xᵀb` by Newton–Raphson (IRLS).
///
/// Stops when the largest coefficient change falls below 1e-8 or after 25
/// iterations. Non-convergence and separation produce warnings, not errors.
pub fn fit_logistic(x: &FeatureMatrix, y: &[u8]) -> Result<IrlsFit> {
    let n = x.n_rows();
    if n != y.len() {
        return Err(Error::Interface(format!("{n} rows but {} outcomes", y.len())));
    }
    let events = y.iter().filter(|&&v| v == 1).count();
    if events == 0 || events == n {
        return Err(Error::Training(
            "logistic regression needs both classes".into(),
        ));
    }
    let q = x.n_cols() + 1;
    let design = DMatrix::from_fn(n, q, |i, j| if j == 0 { 1.0 } else { x.get(i, j - 1) });
    let yv = DVector::from_iterator(n, y.iter().map(|&v| f64::from(v)));

    let mut beta = DVector::zeros(q);
    let mut eta = vec![0.0; n];
    let mut ll = log_likelihood(&eta, y);
    let mut converged = false;
    let mut iterations = 0;
    let mut warnings = Vec::new();

    while iterations < MAX_ITER {
        iterations += 1;
        let mu: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let w: Vec<f64> = mu.iter().map(|&m| (m * (1.0 - m)).max(1e-12)).collect();
        let mut xtwx = DMatrix::zeros(q, q);
        let mut score = DVector::zeros(q);
        for i in 0..n {
            let row = design.row(i);
            let r = yv[i] - mu[i];
            for a in 0..q {
                score[a] += row[a] * r;
                let wa = w[i] * row[a];
                for b in a..q {
                    xtwx[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..q {
            for b in 0..a {
                xtwx[(a, b)] = xtwx[(b, a)];
            }
        }
        let step = match xtwx.clone().cholesky() {
            Some(c) => c.solve(&score),
            None => match xtwx.lu().solve(&score) {
                Some(s) => s,
                None => {
                    warnings.push(format!(
                        "singular information matrix at iteration {iterations}"
                    ));
                    break;
                }
            },
        };

        // Halve the step while the likelihood decreases.
        let mut scale = 1.0;
        let mut candidate;
        let mut cand_eta;
        let mut cand_ll;
        let mut halvings = 0;
        loop {
            candidate = &beta + &step * scale;
            cand_eta = (&design * &candidate).as_slice().to_vec();
            cand_ll = log_likelihood(&cand_eta, y);
            if (cand_ll.is_finite() && cand_ll >= ll - 1e-12 * ll.abs().max(1.0)) || halvings >= 10 {
                break;
            }
            scale *= 0.5;
            halvings += 1;
        }
        let change = (&candidate - &beta).amax();
        beta = candidate;
        eta = cand_eta;
        ll = cand_ll;
        if change < TOL {
            converged = true;
            break;
        }
    }

    let max_eta = eta.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let perfectly_ordered = eta
        .iter()
        .zip(y)
        .all(|(&e, &yi)| if yi == 1 { e > 0.0 } else { e < 0.0 });
    let separation = max_eta > SEPARATION_ETA || (!converged && perfectly_ordered);
    if !converged {
        warnings.push(format!("IRLS did not converge in {iterations} iterations"));
    }
    if separation {
        warnings.push(format!(
            "separation detected (max |linear predictor| = {max_eta:.1})"
        ));
    }
    Ok(IrlsFit {
        model: LogisticModel {
            intercept: beta[0],
            coefficients: beta.iter().skip(1).copied().collect(),
        },
        iterations,
        converged,
        separation,
        warnings,
    })
}
