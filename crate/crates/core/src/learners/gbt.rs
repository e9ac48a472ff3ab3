//! Gradient-boosted regression trees on the logistic loss (Newton boosting).

use serde::{Deserialize, Serialize};

use super::tree::{grow, GrowParams, Newton, SortedColumns, Tree};
use crate::dataset::FeatureMatrix;
use crate::rng::seeded;
use crate::stats::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    /// Starting margin, `logit` of the training event fraction.
    pub base_score: f64,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub trees: Vec<Tree>,
    /// Mean training log-loss before the first round and after every round.
    pub loss_trace: Vec<f64>,
}

impl GbtModel {
    pub fn margin_row(&self, x: &[f64]) -> f64 {
        self.base_score
            + self.learning_rate * self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>()
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin_row(x))
    }

    /// Risks after each of `checkpoints` rounds (each ≤ `trees.len()`),
    /// as one vector per checkpoint.
    pub fn staged_risks(&self, x: &FeatureMatrix, checkpoints: &[usize]) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::with_capacity(x.n_rows()); checkpoints.len()];
        for row in x.rows() {
            let mut margin = self.base_score;
            let mut done = 0;
            for (c, &stop) in checkpoints.iter().enumerate() {
                let stop = stop.min(self.trees.len());
                while done < stop {
                    margin += self.learning_rate * self.trees[done].predict_row(row);
                    done += 1;
                }
                // Checkpoints need not be sorted.
                if done > stop {
                    let m = self.base_score
                        + self.learning_rate
                            * self.trees[..stop].iter().map(|t| t.predict_row(row)).sum::<f64>();
                    out[c].push(sigmoid(m));
                } else {
                    out[c].push(sigmoid(margin));
                }
            }
        }
        out
    }
}

fn log_loss(margin: &[f64], y: &[u8]) -> f64 {
    let s: f64 = margin
        .iter()
        .zip(y)
        .map(|(&m, &yi)| {
            let log1pexp = if m > 0.0 {
                m + (-m).exp().ln_1p()
            } else {
                m.exp().ln_1p()
            };
            log1pexp - f64::from(yi) * m
        })
        .sum();
    s / margin.len() as f64
}

#[derive(Debug, Clone, Copy)]
pub struct BoostParams {
    pub max_depth: usize,
    pub rounds: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub min_child_weight: f64,
}

/// Boost `rounds` trees from the base score `logit(φ)`, where `φ` is the
/// training event fraction (both classes must be present).
pub fn fit_gbt(x: &FeatureMatrix, sorted: &SortedColumns, y: &[u8], params: BoostParams) -> GbtModel {
    let n = y.len();
    let events = y.iter().filter(|&&v| v == 1).count() as f64;
    let base_score = crate::stats::logit(events / n as f64);
    let mut margin = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let active = vec![true; n];
    let mut trees = Vec::with_capacity(params.rounds);
    let mut loss_trace = vec![log_loss(&margin, y)];
    // All features are scanned, so the grower never consumes randomness.
    let mut unused = seeded(0);

    for _ in 0..params.rounds {
        for i in 0..n {
            let p = sigmoid(margin[i]);
            grad[i] = p - f64::from(y[i]);
            hess[i] = p * (1.0 - p);
        }
        let crit = Newton {
            grad: &grad,
            hess: &hess,
            lambda: params.lambda,
            min_child_weight: params.min_child_weight,
        };
        let tree = grow(
            x,
            sorted,
            &active,
            &crit,
            GrowParams {
                max_depth: Some(params.max_depth),
                mtry: None,
            },
            &mut unused,
        );
        for (i, row) in x.rows().enumerate() {
            margin[i] += params.learning_rate * tree.predict_row(row);
        }
        trees.push(tree);
        loss_trace.push(log_loss(&margin, y));
    }
    GbtModel {
        base_score,
        learning_rate: params.learning_rate,
        max_depth: params.max_depth,
        trees,
        loss_trace,
    }
}
