//! Full-factorial experiment runner.
//!
//! An iteration draws one training and one validation set for a scenario,
//! applies every correction to the training data, fits every learner and
//! scores its validation risks before and after recalibration. Iterations
//! are independent and run in parallel; every random draw comes from a
//! stream keyed by `(base_seed, scenario, iteration, stage)`, so the output
//! does not depend on the number of workers.

pub mod aggregate;
pub mod ingest;
mod persist;

use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datagen::{sample_scenario, ScenarioConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::learners::{predict, train, LearnerKind, LearnerSpec};
use crate::metrics::{evaluate, evaluate_recalibrated, recalibrate, MetricSet, PredictionRecord};
use crate::resample::{apply_correction, CorrectionKind, CorrectionSpec};
use crate::rng::{stream, tag};

pub use aggregate::{aggregate, AggregateRow, BOOTSTRAP_RESAMPLES};
pub use ingest::{ingest_external, read_dataset, run_external, write_dataset};
pub use persist::{
    predictions_file_name, read_manifest, read_results, results_file_name, run_plan, write_aggregate,
    write_results, Manifest, RunOptions, RunSummary, PREDICTIONS_HEADER,
};

fn default_corrections() -> Vec<CorrectionSpec> {
    CorrectionSpec::defaults()
}
fn default_learners() -> Vec<LearnerSpec> {
    LearnerSpec::defaults()
}
fn default_iterations() -> u32 {
    200
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

/// Everything needed to reproduce a run. Serialised as `plan.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPlan {
    pub scenarios: Vec<ScenarioConfig>,
    #[serde(default = "default_corrections")]
    pub corrections: Vec<CorrectionSpec>,
    #[serde(default = "default_learners")]
    pub learners: Vec<LearnerSpec>,
    #[serde(default = "default_iterations")]
    pub iterations: u32,
    pub base_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Fill `ms_elapsed`. Off by default so reruns are byte-identical.
    #[serde(default)]
    pub record_timing: bool,
    /// Also write every validation risk to `predictions_<id>.csv`.
    #[serde(default)]
    pub save_predictions: bool,
}

impl RunPlan {
    pub fn new(scenarios: Vec<ScenarioConfig>, base_seed: u64) -> Self {
        Self {
            scenarios,
            corrections: default_corrections(),
            learners: default_learners(),
            iterations: default_iterations(),
            base_seed,
            output_dir: default_output_dir(),
            record_timing: false,
            save_predictions: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() || self.corrections.is_empty() || self.learners.is_empty() {
            return Err(Error::Construction(
                "plan needs at least one scenario, correction and learner".into(),
            ));
        }
        if self.iterations == 0 {
            return Err(Error::Construction("iterations must be at least 1".into()));
        }
        for s in &self.scenarios {
            s.validate()?;
        }
        let mut ids: Vec<u32> = self.scenarios.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Construction("scenario ids must be unique".into()));
        }
        for c in &self.corrections {
            c.validate()?;
        }
        for l in &self.learners {
            l.validate()?;
        }
        Ok(())
    }

    /// Rows emitted per iteration of one scenario.
    pub fn rows_per_iteration(&self) -> usize {
        self.corrections.len() * self.learners.len() * 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Raw,
    Recalibrated,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Raw => "raw",
            Phase::Recalibrated => "recalibrated",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One line of `results_<id>.csv`. Metric fields are empty where undefined
/// or where the learner failed (`missing = true`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: u32,
    pub iteration: u32,
    pub correction: CorrectionKind,
    pub learner: LearnerKind,
    pub phase: Phase,
    pub c: Option<f64>,
    pub brier: Option<f64>,
    pub cal_intercept: Option<f64>,
    pub cal_slope: Option<f64>,
    pub missing: bool,
    pub correction_applied: bool,
    pub warnings: String,
    pub ms_elapsed: Option<u64>,
}

/// A warning or error raised while running one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub scenario: u32,
    pub iteration: u32,
    pub correction: Option<CorrectionKind>,
    pub learner: Option<LearnerKind>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationOutput {
    pub rows: Vec<ResultRow>,
    pub predictions: Vec<PredictionRecord>,
    pub log: Vec<LogEntry>,
}

/// Stage tags of the stream hierarchy.
pub(crate) mod stage {
    pub const TRAIN: &str = "train-sample";
    pub const VALIDATION: &str = "validation-sample";
    pub const CORRECTION: &str = "correction";
    pub const LEARNER: &str = "learner";
}

/// Shared inputs of the cell loop.
pub(crate) struct CellContext<'a> {
    pub base_seed: u64,
    pub scenario: &'a ScenarioConfig,
    pub iteration: u32,
    pub corrections: &'a [CorrectionSpec],
    pub learners: &'a [LearnerSpec],
    pub record_timing: bool,
    pub save_predictions: bool,
}

impl CellContext<'_> {
    fn path(&self, parts: &[u64]) -> Vec<u64> {
        let mut p = vec![
            u64::from(self.scenario.id),
            self.scenario.base_seed,
            u64::from(self.iteration),
        ];
        p.extend_from_slice(parts);
        p
    }
}

fn flag_text(m: &MetricSet) -> Vec<String> {
    m.flags
        .iter()
        .map(|f| serde_json::to_value(f).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
        .collect()
}

fn metric_row(
    ctx: &CellContext<'_>,
    correction: CorrectionKind,
    learner: LearnerKind,
    phase: Phase,
    metrics: Option<&MetricSet>,
    correction_applied: bool,
    warnings: &[String],
    ms_elapsed: Option<u64>,
) -> ResultRow {
    let mut w = warnings.to_vec();
    if let Some(m) = metrics {
        w.extend(flag_text(m));
    }
    ResultRow {
        scenario: ctx.scenario.id,
        iteration: ctx.iteration,
        correction,
        learner,
        phase,
        c: metrics.and_then(|m| m.c),
        brier: metrics.and_then(|m| m.brier),
        cal_intercept: metrics.and_then(|m| m.cal_intercept),
        cal_slope: metrics.and_then(|m| m.cal_slope),
        missing: metrics.is_none(),
        correction_applied,
        warnings: w.join(" | "),
        ms_elapsed,
    }
}

/// Run every correction × learner cell on one training/validation pair.
pub(crate) fn run_cells(ctx: &CellContext<'_>, training: &Dataset, validation: &Dataset) -> IterationOutput {
    let mut out = IterationOutput::default();
    let log = |correction, learner, message: String| LogEntry {
        scenario: ctx.scenario.id,
        iteration: ctx.iteration,
        correction,
        learner,
        message,
    };
    for spec in ctx.corrections {
        let kind = spec.kind;
        let mut crng = stream(ctx.base_seed, &ctx.path(&[tag(stage::CORRECTION), tag(kind.as_str())]));
        let corrected = apply_correction(spec, training, &mut crng);
        let mut base_warnings = Vec::new();
        if !corrected.note.is_empty() {
            base_warnings.push(corrected.note.clone());
            out.log.push(log(Some(kind), None, corrected.note.clone()));
        }
        for lspec in ctx.learners {
            let lk = lspec.kind();
            // Keyed by learner only: a correction that falls back to the
            // uncorrected data reproduces the Control cell exactly.
            let mut lrng = stream(ctx.base_seed, &ctx.path(&[tag(stage::LEARNER), tag(lk.as_str())]));
            let start = ctx.record_timing.then(Instant::now);
            let fitted = train(lspec, &corrected.dataset, &mut lrng)
                .and_then(|m| predict(&m, &validation.features).map(|r| (m, r)));
            let ms = start.map(|s| s.elapsed().as_millis() as u64);
            let mut warnings = base_warnings.clone();
            let record = |raw: Option<Vec<f64>>, recal: Option<Vec<f64>>| PredictionRecord {
                scenario: ctx.scenario.id,
                iteration: ctx.iteration,
                correction: kind,
                learner: lk,
                outcomes: validation.outcome.clone(),
                missing: raw.is_none(),
                risks_raw: raw,
                risks_recalibrated: recal,
            };
            match fitted {
                Ok((model, risks)) => {
                    for w in &model.diagnostics.warnings {
                        warnings.push(w.clone());
                        out.log.push(log(Some(kind), Some(lk), w.clone()));
                    }
                    let raw = evaluate(&risks, &validation.outcome).ok();
                    out.rows.push(metric_row(
                        ctx,
                        kind,
                        lk,
                        Phase::Raw,
                        raw.as_ref(),
                        corrected.applied,
                        &warnings,
                        ms,
                    ));
                    let (recal_metrics, recal_risks) = match recalibrate(&risks, &validation.outcome) {
                        Ok(rec) => (evaluate_recalibrated(&rec, &validation.outcome).ok(), Some(rec.risks)),
                        Err(e) => {
                            let msg = format!("recalibration failed: {e}");
                            warnings.push(msg.clone());
                            out.log.push(log(Some(kind), Some(lk), msg));
                            (None, None)
                        }
                    };
                    out.rows.push(metric_row(
                        ctx,
                        kind,
                        lk,
                        Phase::Recalibrated,
                        recal_metrics.as_ref(),
                        corrected.applied,
                        &warnings,
                        ms,
                    ));
                    if ctx.save_predictions {
                        out.predictions.push(record(Some(risks), recal_risks));
                    }
                }
                Err(e) => {
                    let msg = e.to_string();
                    warnings.push(msg.clone());
                    out.log.push(log(Some(kind), Some(lk), msg));
                    for phase in [Phase::Raw, Phase::Recalibrated] {
                        out.rows.push(metric_row(
                            ctx,
                            kind,
                            lk,
                            phase,
                            None,
                            corrected.applied,
                            &warnings,
                            ms,
                        ));
                    }
                    if ctx.save_predictions {
                        out.predictions.push(record(None, None));
                    }
                }
            }
        }
    }
    out
}

/// Draw the training and validation sets of one iteration. Event counts of
/// the two sets are independent binomial draws.
pub fn draw_iteration_data(
    scenario: &ScenarioConfig,
    iteration: u32,
    base_seed: u64,
) -> Result<(Dataset, Dataset)> {
    let model = scenario.model()?;
    let path = |t: &str| [u64::from(scenario.id), scenario.base_seed, u64::from(iteration), tag(t)];
    let mut trng = stream(base_seed, &path(stage::TRAIN));
    let mut vrng = stream(base_seed, &path(stage::VALIDATION));
    let training = sample_scenario(&model, scenario.n_train, scenario.event_fraction, &mut trng)?;
    let validation = sample_scenario(&model, scenario.n_validation, scenario.event_fraction, &mut vrng)?;
    Ok((training, validation))
}

/// All result rows of one iteration. Never fails: a data-generation error
/// yields missing rows for every cell.
pub fn run_iteration(scenario: &ScenarioConfig, iteration: u32, plan: &RunPlan) -> IterationOutput {
    let ctx = CellContext {
        base_seed: plan.base_seed,
        scenario,
        iteration,
        corrections: &plan.corrections,
        learners: &plan.learners,
        record_timing: plan.record_timing,
        save_predictions: plan.save_predictions,
    };
    match draw_iteration_data(scenario, iteration, plan.base_seed) {
        Ok((training, validation)) => run_cells(&ctx, &training, &validation),
        Err(e) => {
            let msg = format!("data generation failed: {e}");
            let mut out = IterationOutput::default();
            for c in &plan.corrections {
                for l in &plan.learners {
                    for phase in [Phase::Raw, Phase::Recalibrated] {
                        out.rows.push(metric_row(
                            &ctx,
                            c.kind,
                            l.kind(),
                            phase,
                            None,
                            false,
                            std::slice::from_ref(&msg),
                            None,
                        ));
                    }
                }
            }
            out.log.push(LogEntry {
                scenario: scenario.id,
                iteration,
                correction: None,
                learner: None,
                message: msg,
            });
            out
        }
    }
}
