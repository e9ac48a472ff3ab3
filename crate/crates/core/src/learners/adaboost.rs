//! Discrete AdaBoost with shallow Gini trees, plus the two undersampling
//! ensembles built on it (RUSBoost and EasyEnsemble).

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow, Gini, GrowParams, SortedColumns, Tree};
use crate::dataset::FeatureMatrix;
use crate::stats::sigmoid;

/// Errors below this are clamped when computing a learner's weight.
const MIN_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakLearner {
    pub tree: Tree,
    pub alpha: f64,
}

/// `+1` where the weighted event share of the leaf exceeds one half.
pub fn vote(tree: &Tree, x: &[f64]) -> f64 {
    if tree.predict_row(x) > 0.5 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedEnsemble {
    pub learners: Vec<WeakLearner>,
}

impl BoostedEnsemble {
    /// `Σ α h(x) / Σ α`, in `[−1, 1]`.
    pub fn normalized_score(&self, x: &[f64]) -> f64 {
        let total: f64 = self.learners.iter().map(|l| l.alpha).sum();
        let s: f64 = self.learners.iter().map(|l| l.alpha * vote(&l.tree, x)).sum();
        s / total
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        sigmoid(2.0 * self.normalized_score(x))
    }
}

#[derive(Debug, Clone, Default)]
pub struct BoostTrace {
    /// Example weights after every retained round.
    pub weights: Vec<Vec<f64>>,
    pub errors: Vec<f64>,
    pub warnings: Vec<String>,
    pub early_stop: bool,
}

fn alpha_of(eps: f64) -> f64 {
    let e = eps.max(MIN_EPS);
    0.5 * ((1.0 - e) / e).ln()
}

/// Fit a weak tree on the rows in `subset`, using `weights` renormalised over
/// the subset.
fn fit_weak<R: Rng + ?Sized>(
    x: &FeatureMatrix,
    sorted: &SortedColumns,
    y: &[u8],
    weights: &[f64],
    subset: &[usize],
    depth: usize,
    rng: &mut R,
) -> Tree {
    let n = y.len();
    let mut active = vec![false; n];
    let mut w = vec![0.0; n];
    let total: f64 = subset.iter().map(|&i| weights[i]).sum();
    for &i in subset {
        active[i] = true;
        w[i] = weights[i] / total;
    }
    let ones = vec![1.0; n];
    let crit = Gini {
        outcome: y,
        count: &ones,
        weight: &w,
        min_leaf: 1.0,
    };
    grow(
        x,
        sorted,
        &active,
        &crit,
        GrowParams {
            max_depth: Some(depth),
            mtry: None,
        },
        rng,
    )
}

fn label(y: u8) -> f64 {
    if y == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Weighted error of `tree` over all rows, with the ±1 votes it casts.
fn weighted_error(x: &FeatureMatrix, y: &[u8], w: &[f64], tree: &Tree) -> (f64, Vec<f64>) {
    let votes: Vec<f64> = x.rows().map(|r| vote(tree, r)).collect();
    let eps = votes
        .iter()
        .zip(y)
        .zip(w)
        .filter(|((&h, &yi), _)| h != label(yi))
        .map(|(_, &wi)| wi)
        .sum();
    (eps, votes)
}

fn reweight(w: &mut [f64], votes: &[f64], y: &[u8], alpha: f64) {
    for ((wi, &h), &yi) in w.iter_mut().zip(votes).zip(y) {
        *wi *= (-alpha * label(yi) * h).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
}

/// Shared boosting loop. `draw` picks the rows each weak learner is fitted
/// on; the error and weight update always use every row.
fn boost<R, D>(
    x: &FeatureMatrix,
    y: &[u8],
    rounds: usize,
    depth: usize,
    max_retries: usize,
    rng: &mut R,
    mut draw: D,
) -> (BoostedEnsemble, BoostTrace)
where
    R: Rng + ?Sized,
    D: FnMut(&mut R) -> Vec<usize>,
{
    let n = y.len();
    let sorted = SortedColumns::new(x);
    let mut w = vec![1.0 / n as f64; n];
    let mut learners = Vec::new();
    let mut trace = BoostTrace::default();

    'rounds: for round in 0..rounds {
        let mut retries = 0;
        loop {
            let subset = draw(rng);
            let tree = fit_weak(x, &sorted, y, &w, &subset, depth, rng);
            let (eps, votes) = weighted_error(x, y, &w, &tree);
            if eps < 0.5 {
                let alpha = alpha_of(eps);
                reweight(&mut w, &votes, y, alpha);
                learners.push(WeakLearner { tree, alpha });
                trace.errors.push(eps);
                trace.weights.push(w.clone());
                if eps <= 0.0 {
                    trace.early_stop = true;
                    break 'rounds;
                }
                break;
            }
            if retries == max_retries {
                trace.warnings.push(format!(
                    "round {}: weak learner error {eps:.3} >= 0.5 after {max_retries} retries; stopped early",
                    round + 1
                ));
                trace.early_stop = true;
                break 'rounds;
            }
            retries += 1;
            w.iter_mut().for_each(|v| *v = 1.0 / n as f64);
        }
    }
    (BoostedEnsemble { learners }, trace)
}

/// Plain discrete AdaBoost on every row.
pub fn fit_adaboost<R: Rng + ?Sized>(
    x: &FeatureMatrix,
    y: &[u8],
    rounds: usize,
    depth: usize,
    rng: &mut R,
) -> (BoostedEnsemble, BoostTrace) {
    let all: Vec<usize> = (0..y.len()).collect();
    // Without resampling a retry would refit the same tree.
    boost(x, y, rounds, depth, 0, rng, |_| all.clone())
}

/// Row indices of the minority and majority classes, in that order.
fn class_split(y: &[u8]) -> (Vec<usize>, Vec<usize>) {
    let ev: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 1).collect();
    let ne: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 0).collect();
    if ev.len() <= ne.len() {
        (ev, ne)
    } else {
        (ne, ev)
    }
}

/// All minority rows plus an equal-sized uniform sample of majority rows.
fn balanced_subset<R: Rng + ?Sized>(minority: &[usize], majority: &[usize], rng: &mut R) -> Vec<usize> {
    let mut out = minority.to_vec();
    out.extend(majority.choose_multiple(rng, minority.len()).copied());
    out.sort_unstable();
    out
}

/// RUSBoost: each round fits the weak tree on a class-balanced random
/// undersample, then updates AdaBoost weights on the full set.
pub fn fit_rusboost<R: Rng + ?Sized>(
    x: &FeatureMatrix,
    y: &[u8],
    rounds: usize,
    depth: usize,
    max_retries: usize,
    rng: &mut R,
) -> (BoostedEnsemble, BoostTrace) {
    let (minority, majority) = class_split(y);
    boost(x, y, rounds, depth, max_retries, rng, |r| {
        balanced_subset(&minority, &majority, r)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EasyEnsembleModel {
    pub members: Vec<BoostedEnsemble>,
}

impl EasyEnsembleModel {
    pub fn member_scores(&self, x: &[f64]) -> Vec<f64> {
        self.members.iter().map(|m| m.normalized_score(x)).collect()
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let s: f64 = self.members.iter().map(|m| m.normalized_score(x)).sum();
        sigmoid(2.0 * s / self.members.len() as f64)
    }
}

/// EasyEnsemble: `subsets` independent balanced undersamples, each boosted
/// separately. Subsets whose first round fails are dropped with a warning.
pub fn fit_easyensemble<R: Rng + ?Sized>(
    x: &FeatureMatrix,
    y: &[u8],
    subsets: usize,
    rounds: usize,
    depth: usize,
    rng: &mut R,
) -> (EasyEnsembleModel, Vec<String>) {
    let (minority, majority) = class_split(y);
    let mut members = Vec::new();
    let mut warnings = Vec::new();
    for s in 0..subsets {
        let idx = balanced_subset(&minority, &majority, rng);
        let sub_x = x.select_rows(&idx);
        let sub_y: Vec<u8> = idx.iter().map(|&i| y[i]).collect();
        let (ens, trace) = fit_adaboost(&sub_x, &sub_y, rounds, depth, rng);
        for w in trace.warnings {
            warnings.push(format!("subset {}: {w}", s + 1));
        }
        if ens.learners.is_empty() {
            warnings.push(format!("subset {} produced no weak learner; dropped", s + 1));
        } else {
            members.push(ens);
        }
    }
    (EasyEnsembleModel { members }, warnings)
}
