//! Probabilistic classifiers: logistic regression, random forest, gradient
//! boosting, RUSBoost and EasyEnsemble.
//!
//! [`train`] fits a [`LearnerSpec`] to a dataset and returns an immutable
//! [`TrainedModel`]; [`predict`] maps validation features to risks in `[0, 1]`.
//! Forest and boosting hyperparameters are chosen by stratified 5-fold
//! cross-validation on held-out deviance.

pub mod adaboost;
pub mod forest;
pub mod gbt;
pub mod logistic;
pub mod tree;
pub mod tuning;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureMatrix};
use crate::error::{Error, Result};

pub use adaboost::{BoostedEnsemble, EasyEnsembleModel};
pub use forest::Forest;
pub use gbt::GbtModel;
pub use logistic::LogisticModel;
use tree::SortedColumns;
use tuning::tune_cv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LearnerKind {
    #[serde(rename = "LR")]
    Lr,
    #[serde(rename = "RF")]
    Rf,
    #[serde(rename = "GBT")]
    Gbt,
    RUSBoost,
    EasyEnsemble,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 5] = [
        LearnerKind::Lr,
        LearnerKind::Rf,
        LearnerKind::Gbt,
        LearnerKind::RUSBoost,
        LearnerKind::EasyEnsemble,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LearnerKind::Lr => "LR",
            LearnerKind::Rf => "RF",
            LearnerKind::Gbt => "GBT",
            LearnerKind::RUSBoost => "RUSBoost",
            LearnerKind::EasyEnsemble => "EasyEnsemble",
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LearnerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Construction(format!("unknown learner {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub trees: usize,
    /// Trees per forest during cross-validation.
    pub cv_trees: usize,
    /// Candidate `mtry` values; empty means `1..=p`.
    pub mtry: Vec<usize>,
    pub min_node_size: Vec<usize>,
    pub folds: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            trees: 500,
            cv_trees: 50,
            mtry: Vec::new(),
            min_node_size: (1..=10).collect(),
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtConfig {
    pub max_depth: Vec<usize>,
    pub rounds: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub lambda: f64,
    pub min_child_weight: f64,
    pub folds: usize,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self {
            max_depth: vec![1, 2, 3],
            rounds: vec![50, 100, 150],
            learning_rate: vec![0.1, 0.3],
            lambda: 1.0,
            min_child_weight: 1.0,
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RusBoostConfig {
    pub rounds: usize,
    pub weak_depth: usize,
    pub max_retries: usize,
}

impl Default for RusBoostConfig {
    fn default() -> Self {
        Self {
            rounds: 10,
            weak_depth: 2,
            max_retries: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EasyEnsembleConfig {
    pub subsets: usize,
    pub rounds: usize,
    pub weak_depth: usize,
}

impl Default for EasyEnsembleConfig {
    fn default() -> Self {
        Self {
            subsets: 10,
            rounds: 10,
            weak_depth: 1,
        }
    }
}

/// A learner and its configuration. Serialised as `{"kind": "RF", ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LearnerSpec {
    #[serde(rename = "LR")]
    Lr,
    #[serde(rename = "RF")]
    Rf(ForestConfig),
    #[serde(rename = "GBT")]
    Gbt(GbtConfig),
    RUSBoost(RusBoostConfig),
    EasyEnsemble(EasyEnsembleConfig),
}

impl LearnerSpec {
    pub fn new(kind: LearnerKind) -> Self {
        match kind {
            LearnerKind::Lr => LearnerSpec::Lr,
            LearnerKind::Rf => LearnerSpec::Rf(ForestConfig::default()),
            LearnerKind::Gbt => LearnerSpec::Gbt(GbtConfig::default()),
            LearnerKind::RUSBoost => LearnerSpec::RUSBoost(RusBoostConfig::default()),
            LearnerKind::EasyEnsemble => LearnerSpec::EasyEnsemble(EasyEnsembleConfig::default()),
        }
    }

    pub fn defaults() -> Vec<Self> {
        LearnerKind::ALL.into_iter().map(Self::new).collect()
    }

    pub fn kind(&self) -> LearnerKind {
        match self {
            LearnerSpec::Lr => LearnerKind::Lr,
            LearnerSpec::Rf(_) => LearnerKind::Rf,
            LearnerSpec::Gbt(_) => LearnerKind::Gbt,
            LearnerSpec::RUSBoost(_) => LearnerKind::RUSBoost,
            LearnerSpec::EasyEnsemble(_) => LearnerKind::EasyEnsemble,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Construction(format!("{}: {m}", self.kind())));
        match self {
            LearnerSpec::Lr => Ok(()),
            LearnerSpec::Rf(c) => {
                if c.trees == 0 || c.cv_trees == 0 {
                    bad("tree counts must be positive")
                } else if c.min_node_size.is_empty() || c.min_node_size.contains(&0) {
                    bad("min_node_size grid must be non-empty and positive")
                } else if c.mtry.contains(&0) {
                    bad("mtry values must be positive")
                } else if c.folds < 2 {
                    bad("at least two folds are needed")
                } else {
                    Ok(())
                }
            }
            LearnerSpec::Gbt(c) => {
                if c.max_depth.is_empty() || c.rounds.is_empty() || c.learning_rate.is_empty() {
                    bad("every grid axis needs at least one value")
                } else if c.max_depth.contains(&0) {
                    bad("depth must be positive")
                } else if c.learning_rate.iter().any(|&v| !(v > 0.0)) {
                    bad("learning rates must be positive")
                } else if !(c.lambda >= 0.0) || !(c.min_child_weight >= 0.0) {
                    bad("lambda and min_child_weight must be non-negative")
                } else if c.folds < 2 {
                    bad("at least two folds are needed")
                } else {
                    Ok(())
                }
            }
            LearnerSpec::RUSBoost(c) => {
                if c.rounds == 0 || c.weak_depth == 0 {
                    bad("rounds and weak_depth must be positive")
                } else {
                    Ok(())
                }
            }
            LearnerSpec::EasyEnsemble(c) => {
                if c.subsets == 0 || c.rounds == 0 || c.weak_depth == 0 {
                    bad("subsets, rounds and weak_depth must be positive")
                } else {
                    Ok(())
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelParams {
    Logistic(LogisticModel),
    Forest(Forest),
    Gbt(GbtModel),
    RusBoost(BoostedEnsemble),
    EasyEnsemble(EasyEnsembleModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub params: String,
    pub deviance: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub converged: bool,
    pub hyperparameters: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    pub cv_trace: Vec<CvPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: LearnerKind,
    pub n_features: usize,
    pub params: ModelParams,
    pub diagnostics: Diagnostics,
}

fn require_both(ds: &Dataset, kind: LearnerKind) -> Result<()> {
    if ds.is_empty() || !ds.has_both_classes() {
        return Err(Error::Training(format!("{kind} needs both classes in the training data")));
    }
    Ok(())
}

pub fn train<R: Rng + ?Sized>(spec: &LearnerSpec, ds: &Dataset, rng: &mut R) -> Result<TrainedModel> {
    spec.validate()?;
    match spec {
        LearnerSpec::Lr => train_lr(ds),
        LearnerSpec::Rf(c) => train_rf(ds, c, rng),
        LearnerSpec::Gbt(c) => train_gbt(ds, c, rng),
        LearnerSpec::RUSBoost(c) => train_rusboost(ds, c, rng),
        LearnerSpec::EasyEnsemble(c) => train_easyensemble(ds, c, rng),
    }
}

pub fn train_lr(ds: &Dataset) -> Result<TrainedModel> {
    require_both(ds, LearnerKind::Lr)?;
    let fit = logistic::fit_logistic(&ds.features, &ds.outcome)?;
    let mut hyperparameters = BTreeMap::new();
    hyperparameters.insert("iterations".to_string(), fit.iterations as f64);
    Ok(TrainedModel {
        kind: LearnerKind::Lr,
        n_features: ds.n_features(),
        params: ModelParams::Logistic(fit.model),
        diagnostics: Diagnostics {
            converged: fit.converged,
            hyperparameters,
            warnings: fit.warnings,
            cv_trace: Vec::new(),
        },
    })
}

fn forest_grid(c: &ForestConfig, p: usize) -> Vec<(usize, usize)> {
    let mut mtry: Vec<usize> = if c.mtry.is_empty() {
        (1..=p.max(1)).collect()
    } else {
        c.mtry.iter().map(|&m| m.clamp(1, p.max(1))).collect()
    };
    mtry.dedup();
    mtry.iter()
        .flat_map(|&m| c.min_node_size.iter().map(move |&s| (m, s)))
        .collect()
}

pub fn train_rf<R: Rng + ?Sized>(ds: &Dataset, c: &ForestConfig, rng: &mut R) -> Result<TrainedModel> {
    require_both(ds, LearnerKind::Rf)?;
    let grid = forest_grid(c, ds.n_features());
    let tuned = tune_cv(ds, &grid, c.folds, rng, |train, test, r| {
        if !train.has_both_classes() {
            return vec![None; grid.len()];
        }
        let sorted = SortedColumns::new(&train.features);
        grid.iter()
            .map(|&(m, s)| {
                let f = forest::fit_forest(&train.features, &sorted, &train.outcome, c.cv_trees, m, s, r);
                Some(test.rows().map(|x| f.predict_row(x)).collect())
            })
            .collect()
    });
    let (mtry, min_node) = tuned.chosen;
    let sorted = SortedColumns::new(&ds.features);
    let f = forest::fit_forest(&ds.features, &sorted, &ds.outcome, c.trees, mtry, min_node, rng);
    let mut hyperparameters = BTreeMap::new();
    hyperparameters.insert("mtry".to_string(), mtry as f64);
    hyperparameters.insert("min_node_size".to_string(), min_node as f64);
    hyperparameters.insert("trees".to_string(), c.trees as f64);
    Ok(TrainedModel {
        kind: LearnerKind::Rf,
        n_features: ds.n_features(),
        params: ModelParams::Forest(f),
        diagnostics: Diagnostics {
            converged: true,
            hyperparameters,
            warnings: tuned.warnings,
            cv_trace: tuned
                .trace
                .into_iter()
                .map(|((m, s), d)| CvPoint {
                    params: format!("mtry={m},min_node_size={s}"),
                    deviance: d,
                })
                .collect(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct GbtPoint {
    depth: usize,
    rounds: usize,
    learning_rate: f64,
}

fn gbt_grid(c: &GbtConfig) -> Vec<GbtPoint> {
    let mut grid = Vec::new();
    for &depth in &c.max_depth {
        for &rounds in &c.rounds {
            for &learning_rate in &c.learning_rate {
                grid.push(GbtPoint {
                    depth,
                    rounds,
                    learning_rate,
                });
            }
        }
    }
    grid
}

fn boost_params(c: &GbtConfig, depth: usize, rounds: usize, learning_rate: f64) -> gbt::BoostParams {
    gbt::BoostParams {
        max_depth: depth,
        rounds,
        learning_rate,
        lambda: c.lambda,
        min_child_weight: c.min_child_weight,
    }
}

pub fn train_gbt<R: Rng + ?Sized>(ds: &Dataset, c: &GbtConfig, rng: &mut R) -> Result<TrainedModel> {
    require_both(ds, LearnerKind::Gbt)?;
    let grid = gbt_grid(c);
    let max_rounds = c.rounds.iter().copied().max().unwrap_or(0);
    let tuned = tune_cv(ds, &grid, c.folds, rng, |train, test, _| {
        let mut out = vec![None; grid.len()];
        if !train.has_both_classes() {
            return out;
        }
        let sorted = SortedColumns::new(&train.features);
        // One long fit per (depth, rate) serves every round count.
        let mut done: Vec<(usize, f64)> = Vec::new();
        for g in &grid {
            if done.contains(&(g.depth, g.learning_rate)) {
                continue;
            }
            done.push((g.depth, g.learning_rate));
            let m = gbt::fit_gbt(
                &train.features,
                &sorted,
                &train.outcome,
                boost_params(c, g.depth, max_rounds, g.learning_rate),
            );
            let slots: Vec<usize> = (0..grid.len())
                .filter(|&i| grid[i].depth == g.depth && grid[i].learning_rate == g.learning_rate)
                .collect();
            let checkpoints: Vec<usize> = slots.iter().map(|&i| grid[i].rounds).collect();
            for (slot, risks) in slots.into_iter().zip(m.staged_risks(test, &checkpoints)) {
                out[slot] = Some(risks);
            }
        }
        out
    });
    let g = tuned.chosen;
    let sorted = SortedColumns::new(&ds.features);
    let model = gbt::fit_gbt(
        &ds.features,
        &sorted,
        &ds.outcome,
        boost_params(c, g.depth, g.rounds, g.learning_rate),
    );
    let mut hyperparameters = BTreeMap::new();
    hyperparameters.insert("max_depth".to_string(), g.depth as f64);
    hyperparameters.insert("rounds".to_string(), g.rounds as f64);
    hyperparameters.insert("learning_rate".to_string(), g.learning_rate);
    Ok(TrainedModel {
        kind: LearnerKind::Gbt,
        n_features: ds.n_features(),
        params: ModelParams::Gbt(model),
        diagnostics: Diagnostics {
            converged: true,
            hyperparameters,
            warnings: tuned.warnings,
            cv_trace: tuned
                .trace
                .into_iter()
                .map(|(p, d)| CvPoint {
                    params: format!(
                        "max_depth={},rounds={},learning_rate={}",
                        p.depth, p.rounds, p.learning_rate
                    ),
                    deviance: d,
                })
                .collect(),
        },
    })
}

pub fn train_rusboost<R: Rng + ?Sized>(
    ds: &Dataset,
    c: &RusBoostConfig,
    rng: &mut R,
) -> Result<TrainedModel> {
    require_both(ds, LearnerKind::RUSBoost)?;
    let (ens, trace) = adaboost::fit_rusboost(
        &ds.features,
        &ds.outcome,
        c.rounds,
        c.weak_depth,
        c.max_retries,
        rng,
    );
    if ens.learners.is_empty() {
        return Err(Error::Training(format!(
            "RUSBoost retained no weak learner: {}",
            trace.warnings.join("; ")
        )));
    }
    let mut hyperparameters = BTreeMap::new();
    hyperparameters.insert("rounds".to_string(), ens.learners.len() as f64);
    hyperparameters.insert("weak_depth".to_string(), c.weak_depth as f64);
    Ok(TrainedModel {
        kind: LearnerKind::RUSBoost,
        n_features: ds.n_features(),
        params: ModelParams::RusBoost(ens),
        diagnostics: Diagnostics {
            converged: trace.warnings.is_empty(),
            hyperparameters,
            warnings: trace.warnings,
            cv_trace: Vec::new(),
        },
    })
}

pub fn train_easyensemble<R: Rng + ?Sized>(
    ds: &Dataset,
    c: &EasyEnsembleConfig,
    rng: &mut R,
) -> Result<TrainedModel> {
    require_both(ds, LearnerKind::EasyEnsemble)?;
    let (model, warnings) =
        adaboost::fit_easyensemble(&ds.features, &ds.outcome, c.subsets, c.rounds, c.weak_depth, rng);
    if model.members.is_empty() {
        return Err(Error::Training(format!(
            "EasyEnsemble: every subset failed: {}",
            warnings.join("; ")
        )));
    }
    let mut hyperparameters = BTreeMap::new();
    hyperparameters.insert("subsets".to_string(), model.members.len() as f64);
    hyperparameters.insert("rounds".to_string(), c.rounds as f64);
    hyperparameters.insert("weak_depth".to_string(), c.weak_depth as f64);
    Ok(TrainedModel {
        kind: LearnerKind::EasyEnsemble,
        n_features: ds.n_features(),
        params: ModelParams::EasyEnsemble(model),
        diagnostics: Diagnostics {
            converged: warnings.is_empty(),
            hyperparameters,
            warnings,
            cv_trace: Vec::new(),
        },
    })
}

impl TrainedModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let p = match &self.params {
            ModelParams::Logistic(m) => m.predict_row(x),
            ModelParams::Forest(m) => m.predict_row(x),
            ModelParams::Gbt(m) => m.predict_row(x),
            ModelParams::RusBoost(m) => m.predict_row(x),
            ModelParams::EasyEnsemble(m) => m.predict_row(x),
        };
        p.clamp(0.0, 1.0)
    }
}

/// Predicted risks for every row of `features`.
pub fn predict(model: &TrainedModel, features: &FeatureMatrix) -> Result<Vec<f64>> {
    if features.n_cols() != model.n_features {
        return Err(Error::Interface(format!(
            "{} model trained on {} features, given {}",
            model.kind,
            model.n_features,
            features.n_cols()
        )));
    }
    Ok(features.rows().map(|x| model.predict_row(x)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Provenance;
    use crate::rng::seeded;

    fn fixture(n: usize) -> Dataset {
        let rows: Vec<[f64; 3]> = (0..n)
            .map(|i| {
                let t = i as f64;
                [(t * 0.61).sin() * 2.0, (t * 0.17).cos(), ((i * 7) % 13) as f64 / 6.0]
            })
            .collect();
        let y = rows
            .iter()
            .enumerate()
            .map(|(i, r)| u8::from(r[0] + r[1] + ((i * 11) % 5) as f64 * 0.4 > 1.2))
            .collect();
        Dataset::new(FeatureMatrix::from_rows(&rows).unwrap(), y, Provenance::Generated).unwrap()
    }

    #[test]
    fn kind_names_round_trip() {
        for k in LearnerKind::ALL {
            assert_eq!(k.as_str().parse::<LearnerKind>().unwrap(), k);
            let json = serde_json::to_string(&LearnerSpec::new(k)).unwrap();
            assert!(json.contains(&format!("\"kind\":\"{k}\"")));
            let back: LearnerSpec = serde_json::from_str(&json).unwrap();
            assert_eq!(back, LearnerSpec::new(k));
        }
        let partial: LearnerSpec = serde_json::from_str(r#"{"kind":"RF","trees":20}"#).unwrap();
        match partial {
            LearnerSpec::Rf(c) => {
                assert_eq!(c.trees, 20);
                assert_eq!(c.min_node_size, (1..=10).collect::<Vec<_>>());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_lr_model_predicts_half() {
        let m = TrainedModel {
            kind: LearnerKind::Lr,
            n_features: 2,
            params: ModelParams::Logistic(LogisticModel {
                intercept: 0.0,
                coefficients: vec![0.0, 0.0],
            }),
            diagnostics: Diagnostics::default(),
        };
        let x = FeatureMatrix::from_rows(&[[1.0, -3.0], [0.0, 9.0]]).unwrap();
        assert_eq!(predict(&m, &x).unwrap(), vec![0.5, 0.5]);
        let narrow = FeatureMatrix::from_rows(&[[1.0]]).unwrap();
        assert!(matches!(predict(&m, &narrow), Err(Error::Interface(_))));
    }

    #[test]
    fn every_learner_trains_and_predicts_in_unit_interval() {
        let ds = fixture(160);
        let specs = vec![
            LearnerSpec::Lr,
            LearnerSpec::Rf(ForestConfig {
                trees: 30,
                cv_trees: 10,
                mtry: vec![1, 3],
                min_node_size: vec![1, 5],
                folds: 3,
            }),
            LearnerSpec::Gbt(GbtConfig {
                rounds: vec![10, 20],
                ..GbtConfig::default()
            }),
            LearnerSpec::new(LearnerKind::RUSBoost),
            LearnerSpec::new(LearnerKind::EasyEnsemble),
        ];
        for spec in specs {
            let a = train(&spec, &ds, &mut seeded(5)).unwrap();
            let b = train(&spec, &ds, &mut seeded(5)).unwrap();
            assert_eq!(a, b, "{} not deterministic", spec.kind());
            let risks = predict(&a, &ds.features).unwrap();
            assert!(risks.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn single_class_is_a_training_error() {
        let ds = fixture(30);
        let only: Vec<usize> = ds.indices_of(0);
        let one = ds.select(&only, Provenance::Generated);
        for spec in LearnerSpec::defaults() {
            assert!(matches!(train(&spec, &one, &mut seeded(1)), Err(Error::Training(_))));
        }
    }

    #[test]
    fn gbt_cv_trace_minimum_is_chosen() {
        let ds = fixture(120);
        let spec = GbtConfig {
            rounds: vec![5, 15],
            ..GbtConfig::default()
        };
        let m = train_gbt(&ds, &spec, &mut seeded(8)).unwrap();
        let best = m
            .diagnostics
            .cv_trace
            .iter()
            .filter_map(|p| p.deviance)
            .fold(f64::INFINITY, f64::min);
        let g = &m.diagnostics.hyperparameters;
        let label = format!(
            "max_depth={},rounds={},learning_rate={}",
            g["max_depth"], g["rounds"], g["learning_rate"]
        );
        let chosen = m.diagnostics.cv_trace.iter().find(|p| p.params == label).unwrap();
        assert_eq!(chosen.deviance, Some(best));
    }
}
