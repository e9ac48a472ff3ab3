//! Independent reference implementations shared by the integration suites
//! and the acceptance runner. Nothing here calls the code under test.

#![allow(dead_code)]

use std::path::Path;

use imbalance_lab::learners::forest::bootstrap_counts;
use imbalance_lab::learners::tree::{Node, Tree};
use imbalance_lab::learners::Forest;
use imbalance_lab::rng::{seeded, SimRng};
use imbalance_lab::{Dataset, FeatureMatrix, Provenance};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

/// Dataset of `n` rows with `p` standard-normal features; events get a mean
/// shift of `shift` in every feature.
pub fn gaussian_dataset(n: usize, p: usize, events: usize, shift: f64, seed: u64) -> Dataset {
    let mut rng = seeded(seed);
    let mut data = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = u8::from(i < events);
        for _ in 0..p {
            let z: f64 = rng.sample(StandardNormal);
            data.push(z + shift * f64::from(label));
        }
        y.push(label);
    }
    Dataset::new(FeatureMatrix::new(data, p).unwrap(), y, Provenance::Generated).unwrap()
}

/// Concordance by enumerating every event / non-event pair.
pub fn brute_concordance(risks: &[f64], y: &[u8]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for i in 0..y.len() {
        if y[i] != 1 {
            continue;
        }
        for j in 0..y.len() {
            if y[j] != 0 {
                continue;
            }
            pairs += 1.0;
            if risks[i] > risks[j] {
                num += 1.0;
            } else if risks[i] == risks[j] {
                num += 0.5;
            }
        }
    }
    num / pairs
}

/// Wilson editing by full sort of all distances, ties by index.
pub fn brute_enn_flags(ds: &Dataset, k: usize) -> Vec<bool> {
    (0..ds.len())
        .map(|i| {
            let mut d: Vec<(f64, usize)> = (0..ds.len())
                .filter(|&j| j != i)
                .map(|j| {
                    let s: f64 = ds.row(i).iter().zip(ds.row(j)).map(|(a, b)| (a - b).powi(2)).sum();
                    (s, j)
                })
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let events = d[..k].iter().filter(|&&(_, j)| ds.outcome[j] == 1).count();
            let label = ds.outcome[i] as usize;
            if 2 * events > k {
                label == 0
            } else if 2 * events < k {
                label == 1
            } else {
                false
            }
        })
        .collect()
}

/// Solve `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[piv][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Logistic maximum likelihood by plain Newton steps on the score equations.
/// Returns `[intercept, coefficients...]`.
pub fn newton_logistic(ds: &Dataset) -> Vec<f64> {
    let p = ds.n_features() + 1;
    let mut beta = vec![0.0; p];
    for _ in 0..100 {
        let mut grad = vec![0.0; p];
        let mut hess = vec![vec![0.0; p]; p];
        for i in 0..ds.len() {
            let mut z = vec![1.0];
            z.extend_from_slice(ds.row(i));
            let eta: f64 = z.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let mu = 1.0 / (1.0 + (-eta).exp());
            for a in 0..p {
                grad[a] += (f64::from(ds.outcome[i]) - mu) * z[a];
                for b in 0..p {
                    hess[a][b] += mu * (1.0 - mu) * z[a] * z[b];
                }
            }
        }
        let step = gauss_solve(hess, grad).expect("information matrix is non-singular");
        let size = step.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        for (b, s) in beta.iter_mut().zip(&step) {
            *b += s;
        }
        if size < 1e-13 {
            break;
        }
    }
    beta
}

/// Loess value at `x0` computed from scratch: tricube weights on the `q`
/// nearest points and a weighted polynomial normal-equation solve.
pub fn loess_point(x: &[f64], y: &[f64], x0: f64, span: f64, degree: usize) -> f64 {
    let n = x.len();
    let q = ((n as f64 * span).floor() as usize).clamp(degree + 1, n);
    let mut dist: Vec<f64> = x.iter().map(|v| (v - x0).abs()).collect();
    let mut sorted = dist.clone();
    sorted.sort_by(f64::total_cmp);
    let h = sorted[q - 1];
    for d in dist.iter_mut() {
        let u = *d / h;
        *d = if u < 1.0 { (1.0 - u.powi(3)).powi(3) } else { 0.0 };
    }
    let m = degree + 1;
    let mut a = vec![vec![0.0; m]; m];
    let mut b = vec![0.0; m];
    for i in 0..n {
        let t = x[i] - x0;
        for r in 0..m {
            b[r] += dist[i] * t.powi(r as i32) * y[i];
            for c in 0..m {
                a[r][c] += dist[i] * t.powi((r + c) as i32);
            }
        }
    }
    gauss_solve(a, b).expect("well-posed local fit")[0]
}

fn weighted_gini(weight: f64, events: f64) -> f64 {
    if weight <= 0.0 {
        0.0
    } else {
        2.0 * events * (weight - events) / weight
    }
}

/// Per-tree bootstrap multiplicities that `fit_forest` draws from `seed`.
pub fn forest_bootstrap(n: usize, n_trees: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seeded(seed);
    (0..n_trees)
        .map(|_| {
            let mut t = SimRng::seed_from_u64(rng.random());
            bootstrap_counts(n, &mut t)
        })
        .collect()
}

/// Checks one forest tree against its bootstrap sample: leaf values equal the
/// in-bag event fraction, every leaf holds at least `min_leaf` draws and
/// every split strictly lowers the count-weighted Gini impurity. Returns
/// the largest leaf-value discrepancy.
pub fn check_forest_tree(tree: &Tree, x: &FeatureMatrix, y: &[u8], counts: &[f64], min_leaf: f64) -> Result<f64, String> {
    let nodes = tree.nodes();
    let mut mass = vec![(0.0, 0.0); nodes.len()];
    for i in 0..x.n_rows() {
        if counts[i] == 0.0 {
            continue;
        }
        let mut k = 0;
        loop {
            mass[k].0 += counts[i];
            mass[k].1 += counts[i] * f64::from(y[i]);
            match nodes[k] {
                Node::Leaf { .. } => break,
                Node::Split { feature, threshold, left, right } => {
                    k = if x.get(i, feature) <= threshold { left } else { right };
                }
            }
        }
    }
    let mut worst = 0.0f64;
    for (k, node) in nodes.iter().enumerate() {
        match *node {
            Node::Leaf { value, .. } => {
                if mass[k].0 < min_leaf {
                    return Err(format!("leaf {k} holds {} < {min_leaf}", mass[k].0));
                }
                worst = worst.max((value - mass[k].1 / mass[k].0).abs());
            }
            Node::Split { left, right, .. } => {
                let parent = weighted_gini(mass[k].0, mass[k].1);
                let children = weighted_gini(mass[left].0, mass[left].1) + weighted_gini(mass[right].0, mass[right].1);
                if !(children < parent) {
                    return Err(format!("split {k} does not reduce impurity ({parent} -> {children})"));
                }
            }
        }
    }
    Ok(worst)
}

/// Forest risk recomputed from the tree structure and bootstrap samples.
pub fn forest_risk_oracle(forest: &Forest, x: &FeatureMatrix, y: &[u8], boots: &[Vec<f64>], row: &[f64]) -> f64 {
    let mut total = 0.0;
    for (tree, counts) in forest.trees.iter().zip(boots) {
        let leaf = tree.leaf_of(row);
        let (mut w, mut e) = (0.0, 0.0);
        for i in 0..x.n_rows() {
            if counts[i] > 0.0 && tree.leaf_of(x.row(i)) == leaf {
                w += counts[i];
                e += counts[i] * f64::from(y[i]);
            }
        }
        total += e / w;
    }
    total / forest.trees.len() as f64
}

pub fn file_digest(path: &Path) -> String {
    let bytes = std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    hex::encode(Sha256::digest(&bytes))
}

/// Digest of every regular file in `dir`, sorted by name.
pub fn dir_digest(dir: &Path) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), file_digest(&p)))
        .collect();
    out.sort();
    out
}
