//! Medians over iterations with bootstrap Monte Carlo errors.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Phase, ResultRow};
use crate::learners::LearnerKind;
use crate::metrics::capped_slope;
use crate::resample::CorrectionKind;
use crate::rng::{stream, tag};
use crate::stats::{median, sample_sd};

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

pub const METRICS: [&str; 4] = ["c", "brier", "cal_intercept", "cal_slope"];

/// One line of `aggregate.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scenario: u32,
    pub correction: CorrectionKind,
    pub learner: LearnerKind,
    pub phase: Phase,
    pub metric: String,
    pub median: Option<f64>,
    pub mc_error: Option<f64>,
    pub n_missing: usize,
}

/// Standard deviation of the median over `resamples` bootstrap resamples.
pub fn bootstrap_median_error<R: Rng + ?Sized>(values: &[f64], resamples: usize, rng: &mut R) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mut buf = vec![0.0; n];
    let medians: Vec<f64> = (0..resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = values[rng.random_range(0..n)];
            }
            median(&buf).expect("non-empty resample")
        })
        .collect();
    Some(sample_sd(&medians))
}

fn metric_value(row: &ResultRow, metric: &str) -> Option<f64> {
    match metric {
        "c" => row.c,
        "brier" => row.brier,
        "cal_intercept" => row.cal_intercept,
        // Reported slopes are capped; results files keep the raw value.
        "cal_slope" => row.cal_slope.map(capped_slope),
        _ => None,
    }
}

/// Summaries per (scenario, correction, learner, phase, metric), sorted by
/// that key. The bootstrap stream of each group is derived from `base_seed`
/// and the group key alone.
pub fn aggregate(rows: &[ResultRow], base_seed: u64) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(u32, CorrectionKind, LearnerKind, Phase), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.scenario, r.correction, r.learner, r.phase))
            .or_default()
            .push(r);
    }
    let mut out = Vec::new();
    for ((scenario, correction, learner, phase), members) in groups {
        for metric in METRICS {
            let values: Vec<f64> = members.iter().filter_map(|r| metric_value(r, metric)).collect();
            let mut rng = stream(
                base_seed,
                &[
                    tag("aggregate"),
                    u64::from(scenario),
                    tag(correction.as_str()),
                    tag(learner.as_str()),
                    tag(phase.as_str()),
                    tag(metric),
                ],
            );
            out.push(AggregateRow {
                scenario,
                correction,
                learner,
                phase,
                metric: metric.to_string(),
                median: median(&values),
                mc_error: bootstrap_median_error(&values, BOOTSTRAP_RESAMPLES, &mut rng),
                n_missing: members.len() - values.len(),
            });
        }
    }
    out
}
