//! Loading user-supplied tabular data and running the cell grid on it.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;

use super::{run_cells, CellContext, IterationOutput};
use crate::datagen::ScenarioConfig;
use crate::dataset::{Dataset, FeatureMatrix, Provenance};
use crate::error::{Error, Result};
use crate::learners::LearnerSpec;
use crate::resample::CorrectionSpec;
use crate::rng::seeded;

fn ingest_error(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Ingest {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

/// Read a complete-case numeric CSV with a header row. Every column other
/// than `outcome_column` becomes a feature, in file order.
///
/// Row numbers in errors count data rows from 1.
pub fn read_dataset(path: &Path, outcome_column: &str) -> Result<(Dataset, Vec<String>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers()?.clone();
    let outcome_idx = headers
        .iter()
        .position(|h| h == outcome_column)
        .ok_or_else(|| ingest_error(0, outcome_column, "outcome column not found in header"))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != outcome_idx)
        .map(|(_, h)| h.to_string())
        .collect();
    if feature_names.is_empty() {
        return Err(ingest_error(0, outcome_column, "no feature columns"));
    }

    let mut data = Vec::new();
    let mut outcome = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record?;
        if record.len() != headers.len() {
            return Err(ingest_error(
                row,
                "",
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        for (i, cell) in record.iter().enumerate() {
            let name = &headers[i];
            let cell = cell.trim();
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                return Err(ingest_error(row, name, "missing value"));
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| ingest_error(row, name, format!("'{cell}' is not numeric")))?;
            if !v.is_finite() {
                return Err(ingest_error(row, name, format!("'{cell}' is not finite")));
            }
            if i == outcome_idx {
                if v != 0.0 && v != 1.0 {
                    return Err(ingest_error(row, name, format!("outcome '{cell}' is not 0 or 1")));
                }
                outcome.push(v as u8);
            } else {
                data.push(v);
            }
        }
    }
    if outcome.is_empty() {
        return Err(ingest_error(0, outcome_column, "no data rows"));
    }
    let features = FeatureMatrix::new(data, feature_names.len())?;
    Ok((Dataset::new(features, outcome, Provenance::External)?, feature_names))
}

/// Write a dataset as CSV with feature columns `x1..xp` followed by `y`.
pub fn write_dataset<W: Write>(ds: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=ds.n_features()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    for i in 0..ds.len() {
        let mut rec: Vec<String> = ds.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(ds.outcome[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))
}

/// Read a dataset with [`read_dataset`], split it at random into training
/// and validation parts and optionally z-standardise the features with
/// training-split means and standard deviations.
pub fn ingest_external(
    path: &Path,
    outcome_column: &str,
    train_fraction: f64,
    seed: u64,
    standardize: bool,
) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Domain(format!(
            "split fraction {train_fraction} must lie in (0, 1)"
        )));
    }
    let (full, feature_names) = read_dataset(path, outcome_column)?;
    let n = full.len();
    if n < 2 {
        return Err(ingest_error(n, outcome_column, "need at least two data rows"));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(seed));
    let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
    let mut train_idx = order[..n_train].to_vec();
    let mut val_idx = order[n_train..].to_vec();
    train_idx.sort_unstable();
    val_idx.sort_unstable();

    let mut train = full.select(&train_idx, Provenance::External);
    let mut val = full.select(&val_idx, Provenance::External);
    if standardize {
        let (means, sds) = column_moments(&train.features);
        for (j, &sd) in sds.iter().enumerate() {
            if !(sd > 0.0) {
                return Err(ingest_error(0, &feature_names[j], "constant in the training split; cannot standardise"));
            }
        }
        train.features = standardized(&train.features, &means, &sds);
        val.features = standardized(&val.features, &means, &sds);
    }
    Ok((train, val))
}

fn column_moments(x: &FeatureMatrix) -> (Vec<f64>, Vec<f64>) {
    (0..x.n_cols())
        .map(|j| {
            let col = x.column(j);
            (crate::stats::mean(&col), crate::stats::sample_sd(&col))
        })
        .unzip()
}

fn standardized(x: &FeatureMatrix, means: &[f64], sds: &[f64]) -> FeatureMatrix {
    let p = x.n_cols();
    let data = x
        .as_slice()
        .iter()
        .enumerate()
        .map(|(k, &v)| (v - means[k % p]) / sds[k % p])
        .collect();
    FeatureMatrix::new(data, p).expect("same shape as input")
}

/// Run every correction × learner cell on an external training/validation
/// pair. Rows carry scenario id 0 and iteration 0.
pub fn run_external(
    training: &Dataset,
    validation: &Dataset,
    corrections: &[CorrectionSpec],
    learners: &[LearnerSpec],
    seed: u64,
) -> Result<IterationOutput> {
    if training.n_features() != validation.n_features() {
        return Err(Error::Interface("training and validation widths differ".into()));
    }
    // Placeholder scenario: only its id and seed enter the stream paths.
    let scenario = ScenarioConfig {
        id: 0,
        p: training.n_features(),
        n_covarying: 0,
        event_fraction: training.event_fraction(),
        n_train: training.len(),
        n_validation: validation.len(),
        delta_mu: 0.0,
        delta_sigma: 0.0,
        rho: 0.0,
        target_c: 0.5,
        base_seed: seed,
    };
    let ctx = CellContext {
        base_seed: seed,
        scenario: &scenario,
        iteration: 0,
        corrections,
        learners,
        record_timing: false,
        save_predictions: false,
    };
    Ok(run_cells(&ctx, training, validation))
}
