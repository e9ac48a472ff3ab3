//! Result files, the run manifest and checkpointed execution of a plan.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::aggregate::{AggregateRow, BOOTSTRAP_RESAMPLES};
use super::{run_iteration, LogEntry, Phase, ResultRow, RunPlan};
use crate::error::{Error, Result};

pub const RESULTS_HEADER: [&str; 13] = [
    "scenario",
    "iteration",
    "correction",
    "learner",
    "phase",
    "c",
    "brier",
    "cal_intercept",
    "cal_slope",
    "missing",
    "correction_applied",
    "warnings",
    "ms_elapsed",
];

pub const PREDICTIONS_HEADER: [&str; 7] =
    ["scenario", "iteration", "correction", "learner", "phase", "outcome", "risk"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioProgress {
    pub id: u32,
    pub base_seed: u64,
    pub results_file: String,
    pub iterations_completed: u32,
}

/// `manifest.json`: enough to audit and resume a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub software_version: String,
    pub base_seed: u64,
    /// SHA-256 of the plan with its output directory blanked.
    pub config_hash: String,
    pub iterations: u32,
    pub scenarios: Vec<ScenarioProgress>,
    pub mc_error_method: String,
    pub bootstrap_resamples: usize,
    pub complete: bool,
    pub log: Vec<LogEntry>,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub jobs: usize,
    /// Keep complete iterations already on disk and compute only the rest.
    pub resume: bool,
    /// Print one progress line per checkpoint to stderr.
    pub progress: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            jobs: 1,
            resume: false,
            progress: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub results_files: Vec<PathBuf>,
    pub manifest: PathBuf,
    pub rows: usize,
    pub missing_rows: usize,
}

pub fn config_hash(plan: &RunPlan) -> Result<String> {
    let mut p = plan.clone();
    p.output_dir = PathBuf::new();
    let bytes = serde_json::to_vec(&p)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn results_file_name(scenario: u32) -> String {
    format!("results_{scenario}.csv")
}

pub fn predictions_file_name(scenario: u32) -> String {
    format!("predictions_{scenario}.csv")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(create(path)?);
    w.write_record(RESULTS_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["scenario", "correction", "learner", "phase", "metric", "median", "mc_error", "n_missing"])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_manifest(path: &Path, m: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(m)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Raw records of the complete iterations `0..m` at the start of an existing
/// file, where every iteration has `per_iteration` records.
fn complete_prefix(path: &Path, header: &[&str], per_iteration: Option<usize>, limit: Option<u32>) -> Result<(Vec<csv::StringRecord>, u32)> {
    if !path.exists() {
        return Ok((Vec::new(), 0));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let found: Vec<&str> = r.headers()?.iter().collect();
    if found != header {
        return Err(Error::Interface(format!(
            "{} has an unexpected header; cannot resume",
            path.display()
        )));
    }
    let mut kept = Vec::new();
    let mut current: Option<u32> = None;
    let mut batch = Vec::new();
    let mut done = 0u32;
    for rec in r.records() {
        let Ok(rec) = rec else { break };
        if rec.len() != header.len() {
            break;
        }
        let Ok(it) = rec[1].parse::<u32>() else { break };
        if current != Some(it) {
            if let Some(c) = current {
                if per_iteration.is_none_or(|n| batch.len() == n) && c == done {
                    kept.append(&mut batch);
                    done += 1;
                } else {
                    batch.clear();
                    break;
                }
            }
            current = Some(it);
        }
        batch.push(rec);
    }
    // The last iteration in the file may be truncated, so it is only kept
    // when its record count proves it complete.
    if let Some(c) = current {
        if c == done && per_iteration.is_some_and(|n| batch.len() == n) {
            kept.append(&mut batch);
            done += 1;
        }
    }
    if let Some(limit) = limit {
        if done > limit {
            kept.retain(|rec| rec[1].parse::<u32>().is_ok_and(|i| i < limit));
            done = limit;
        }
    }
    Ok((kept, done))
}

/// Run every iteration of every scenario, writing `results_<id>.csv`,
/// optional `predictions_<id>.csv` and `manifest.json` under
/// `plan.output_dir`.
///
/// Iterations run on `options.jobs` workers in checkpoints; rows are written
/// in iteration order after each checkpoint, so the files are identical for
/// any worker count.
pub fn run_plan(plan: &RunPlan, options: &RunOptions) -> Result<RunSummary> {
    plan.validate()?;
    let dir = &plan.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest_path = dir.join("manifest.json");
    let hash = config_hash(plan)?;

    let mut previous_log = Vec::new();
    if options.resume && manifest_path.exists() {
        let old = read_manifest(&manifest_path)?;
        if old.config_hash != hash {
            return Err(Error::Interface(
                "plan differs from the run recorded in manifest.json; refusing to resume".into(),
            ));
        }
        previous_log = old.log;
    }

    let mut manifest = Manifest {
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        base_seed: plan.base_seed,
        config_hash: hash,
        iterations: plan.iterations,
        scenarios: plan
            .scenarios
            .iter()
            .map(|s| ScenarioProgress {
                id: s.id,
                base_seed: s.base_seed,
                results_file: results_file_name(s.id),
                iterations_completed: 0,
            })
            .collect(),
        mc_error_method: "bootstrap standard deviation of the median".to_string(),
        bootstrap_resamples: BOOTSTRAP_RESAMPLES,
        complete: false,
        log: Vec::new(),
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs.max(1))
        .build()
        .map_err(|e| Error::Construction(format!("worker pool: {e}")))?;
    let chunk = (options.jobs.max(1) * 2) as u32;
    let per_iteration = plan.rows_per_iteration();
    let mut summary = RunSummary {
        results_files: Vec::new(),
        manifest: manifest_path.clone(),
        rows: 0,
        missing_rows: 0,
    };

    for (si, scenario) in plan.scenarios.iter().enumerate() {
        let results_path = dir.join(results_file_name(scenario.id));
        let pred_path = dir.join(predictions_file_name(scenario.id));
        let (kept, mut start) = if options.resume {
            complete_prefix(&results_path, &RESULTS_HEADER, Some(per_iteration), Some(plan.iterations))?
        } else {
            (Vec::new(), 0)
        };
        let kept_preds = if options.resume && plan.save_predictions {
            let (recs, done) = complete_prefix(&pred_path, &PREDICTIONS_HEADER, None, Some(start))?;
            if done < start {
                // Prediction file lags behind; recompute from there.
                start = done;
            }
            recs.into_iter()
                .filter(|r| r[1].parse::<u32>().is_ok_and(|i| i < start))
                .collect()
        } else {
            Vec::new()
        };
        let kept: Vec<csv::StringRecord> = kept
            .into_iter()
            .filter(|r| r[1].parse::<u32>().is_ok_and(|i| i < start))
            .collect();
        manifest.log.extend(
            previous_log
                .iter()
                .filter(|e| e.scenario == scenario.id && e.iteration < start)
                .cloned(),
        );
        for rec in &kept {
            summary.rows += 1;
            if &rec[9] == "true" {
                summary.missing_rows += 1;
            }
        }

        let mut results = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(create(&results_path)?);
        results.write_record(RESULTS_HEADER)?;
        for rec in &kept {
            results.write_record(rec)?;
        }
        let mut preds = if plan.save_predictions {
            let mut w = csv::Writer::from_writer(create(&pred_path)?);
            w.write_record(PREDICTIONS_HEADER)?;
            for rec in &kept_preds {
                w.write_record(rec)?;
            }
            Some(w)
        } else {
            None
        };
        manifest.scenarios[si].iterations_completed = start;
        write_manifest(&manifest_path, &manifest)?;

        let mut next = start;
        while next < plan.iterations {
            let end = (next + chunk).min(plan.iterations);
            let outputs: Vec<_> = pool.install(|| {
                (next..end)
                    .into_par_iter()
                    .map(|it| run_iteration(scenario, it, plan))
                    .collect()
            });
            for out in outputs {
                for row in &out.rows {
                    results.serialize(row)?;
                    summary.rows += 1;
                    if row.missing {
                        summary.missing_rows += 1;
                    }
                }
                if let Some(w) = preds.as_mut() {
                    for rec in &out.predictions {
                        for (phase, risks) in [
                            (Phase::Raw, rec.risks_raw.as_ref()),
                            (Phase::Recalibrated, rec.risks_recalibrated.as_ref()),
                        ] {
                            let Some(risks) = risks else { continue };
                            for (y, p) in rec.outcomes.iter().zip(risks) {
                                w.serialize((
                                    rec.scenario,
                                    rec.iteration,
                                    rec.correction,
                                    rec.learner,
                                    phase,
                                    y,
                                    p,
                                ))?;
                            }
                        }
                    }
                }
                manifest.log.extend(out.log);
            }
            results.flush().map_err(|e| Error::io(&results_path, e))?;
            if let Some(w) = preds.as_mut() {
                w.flush().map_err(|e| Error::io(&pred_path, e))?;
            }
            next = end;
            manifest.scenarios[si].iterations_completed = next;
            write_manifest(&manifest_path, &manifest)?;
            if options.progress {
                eprintln!(
                    "scenario {}: {next}/{} iterations",
                    scenario.id, plan.iterations
                );
            }
        }
        summary.results_files.push(results_path);
    }
    manifest.complete = true;
    write_manifest(&manifest_path, &manifest)?;
    Ok(summary)
}
