//! Probability random forest: bootstrap Gini trees whose leaves hold event
//! fractions.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::tree::{grow, Gini, GrowParams, SortedColumns, Tree};
use crate::dataset::FeatureMatrix;
use crate::rng::SimRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub mtry: usize,
    pub min_node_size: usize,
}

impl Forest {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let s: f64 = self.trees.iter().map(|t| t.predict_row(x)).sum();
        (s / self.trees.len() as f64).clamp(0.0, 1.0)
    }
}

/// Bootstrap multiplicity of every row: `n` uniform draws with replacement.
pub fn bootstrap_counts<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut counts = vec![0.0; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1.0;
    }
    counts
}

/// Fit `n_trees` trees. Each tree draws its own bootstrap sample from a
/// stream seeded off `rng`, so the forest does not depend on evaluation order.
pub fn fit_forest<R: Rng + ?Sized>(
    x: &FeatureMatrix,
    sorted: &SortedColumns,
    y: &[u8],
    n_trees: usize,
    mtry: usize,
    min_node_size: usize,
    rng: &mut R,
) -> Forest {
    let n = x.n_rows();
    let trees = (0..n_trees.max(1))
        .map(|_| {
            let mut tree_rng = SimRng::seed_from_u64(rng.random());
            let counts = bootstrap_counts(n, &mut tree_rng);
            let active: Vec<bool> = counts.iter().map(|&c| c > 0.0).collect();
            let crit = Gini {
                outcome: y,
                count: &counts,
                weight: &counts,
                min_leaf: min_node_size as f64,
            };
            grow(
                x,
                sorted,
                &active,
                &crit,
                GrowParams {
                    max_depth: None,
                    mtry: Some(mtry),
                },
                &mut tree_rng,
            )
        })
        .collect();
    Forest {
        trees,
        mtry,
        min_node_size,
    }
}
