//! Stratified k-fold cross-validation minimising held-out deviance.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::{Dataset, FeatureMatrix, Provenance};
use crate::stats::clamp_prob;

/// `−2 · mean log-likelihood`, with risks clamped to `[1e-10, 1 − 1e-10]`.
pub fn deviance(risks: &[f64], outcome: &[u8]) -> f64 {
    let ll: f64 = risks
        .iter()
        .zip(outcome)
        .map(|(&p, &y)| {
            let p = clamp_prob(p);
            if y == 1 {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum();
    -2.0 * ll / risks.len() as f64
}

/// Fold id for every row. Each class is shuffled separately and dealt
/// round-robin, continuing the deal across classes so fold sizes differ by
/// at most one.
pub fn stratified_folds<R: Rng + ?Sized>(outcome: &[u8], folds: usize, rng: &mut R) -> Vec<usize> {
    let mut fold = vec![0; outcome.len()];
    let mut next = 0;
    for label in [1u8, 0u8] {
        let mut idx: Vec<usize> = (0..outcome.len()).filter(|&i| outcome[i] == label).collect();
        idx.shuffle(rng);
        for i in idx {
            fold[i] = next % folds;
            next += 1;
        }
    }
    fold
}

#[derive(Debug, Clone)]
pub struct TuneOutcome<P> {
    pub chosen: P,
    pub chosen_index: usize,
    /// Every candidate with its mean held-out deviance (`None` if no fold
    /// produced predictions).
    pub trace: Vec<(P, Option<f64>)>,
    pub warnings: Vec<String>,
}

/// Pick the grid point with the lowest mean held-out deviance.
///
/// `held_out` receives a training fold and the held-out features and must
/// return one risk vector per grid point (or `None` where fitting failed).
/// Ties go to the earliest grid point; if no grid point could be scored the
/// grid midpoint is returned with a warning.
pub fn tune_cv<P, R, F>(
    ds: &Dataset,
    grid: &[P],
    folds: usize,
    rng: &mut R,
    mut held_out: F,
) -> TuneOutcome<P>
where
    P: Clone,
    R: Rng + ?Sized,
    F: FnMut(&Dataset, &FeatureMatrix, &mut R) -> Vec<Option<Vec<f64>>>,
{
    assert!(!grid.is_empty(), "tuning grid must not be empty");
    let mut warnings = Vec::new();
    if grid.len() == 1 {
        return TuneOutcome {
            chosen: grid[0].clone(),
            chosen_index: 0,
            trace: vec![(grid[0].clone(), None)],
            warnings,
        };
    }

    let folds = folds.max(2);
    let assignment = stratified_folds(&ds.outcome, folds, rng);
    let mut total = vec![0.0; grid.len()];
    let mut scored = vec![0usize; grid.len()];
    for f in 0..folds {
        let test_idx: Vec<usize> = (0..ds.len()).filter(|&i| assignment[i] == f).collect();
        if test_idx.is_empty() {
            continue;
        }
        let train_idx: Vec<usize> = (0..ds.len()).filter(|&i| assignment[i] != f).collect();
        let train = ds.select(&train_idx, Provenance::Corrected);
        let test = ds.select(&test_idx, Provenance::Corrected);
        let risks = held_out(&train, &test.features, rng);
        debug_assert_eq!(risks.len(), grid.len());
        for (g, r) in risks.into_iter().enumerate() {
            if let Some(r) = r {
                total[g] += deviance(&r, &test.outcome);
                scored[g] += 1;
            }
        }
    }

    let trace: Vec<(P, Option<f64>)> = grid
        .iter()
        .enumerate()
        .map(|(g, p)| (p.clone(), (scored[g] > 0).then(|| total[g] / scored[g] as f64)))
        .collect();
    let mut chosen_index = None;
    let mut best = f64::INFINITY;
    for (g, (_, dev)) in trace.iter().enumerate() {
        if let Some(d) = *dev {
            if d < best {
                best = d;
                chosen_index = Some(g);
            }
        }
    }
    let chosen_index = chosen_index.unwrap_or_else(|| {
        warnings.push("no grid point could be scored in cross-validation; using grid midpoint".into());
        grid.len() / 2
    });
    TuneOutcome {
        chosen: grid[chosen_index].clone(),
        chosen_index,
        trace,
        warnings,
    }
}
