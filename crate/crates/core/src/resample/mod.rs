//! Data-level imbalance corrections: random under-sampling (RUS), random
//! over-sampling (ROS), SMOTE, and SMOTE followed by Wilson's edited nearest
//! neighbour rule (SENN).
//!
//! Every correction aims at a target *minority* fraction (0.5 = exact count
//! balance). The minority class is whichever label has fewer rows; on a tie
//! the events are treated as the minority and nothing needs to change.
//! Corrections only ever see the training data.

pub mod neighbors;

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample as sample_without_replacement;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Provenance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CorrectionKind {
    Control,
    #[serde(rename = "RUS")]
    Rus,
    #[serde(rename = "ROS")]
    Ros,
    #[serde(rename = "SMOTE")]
    Smote,
    #[serde(rename = "SENN")]
    Senn,
}

impl CorrectionKind {
    pub const ALL: [CorrectionKind; 5] = [
        CorrectionKind::Control,
        CorrectionKind::Rus,
        CorrectionKind::Ros,
        CorrectionKind::Smote,
        CorrectionKind::Senn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CorrectionKind::Control => "Control",
            CorrectionKind::Rus => "RUS",
            CorrectionKind::Ros => "ROS",
            CorrectionKind::Smote => "SMOTE",
            CorrectionKind::Senn => "SENN",
        }
    }
}

impl fmt::Display for CorrectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CorrectionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CorrectionKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Domain(format!("unknown correction '{s}'")))
    }
}

/// Which rows the ENN step may delete.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnnScope {
    /// Any row whose label disagrees with its neighbourhood.
    #[default]
    AllClasses,
    /// Only rows of the class that was the majority before SMOTE.
    MajorityOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionSpec {
    pub kind: CorrectionKind,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_k")]
    pub k1: usize,
    #[serde(default = "default_k2")]
    pub k2: usize,
    #[serde(default = "default_target")]
    pub target_event_fraction: f64,
    #[serde(default)]
    pub enn_scope: EnnScope,
}

fn default_k() -> usize {
    5
}
fn default_k2() -> usize {
    3
}
fn default_target() -> f64 {
    0.5
}

impl CorrectionSpec {
    pub fn new(kind: CorrectionKind) -> Self {
        Self {
            kind,
            k: default_k(),
            k1: default_k(),
            k2: default_k2(),
            target_event_fraction: default_target(),
            enn_scope: EnnScope::default(),
        }
    }

    /// The five corrections of the full design, with default hyperparameters.
    pub fn defaults() -> Vec<Self> {
        CorrectionKind::ALL.into_iter().map(Self::new).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k1 == 0 {
            return Err(Error::Domain("SMOTE neighbour counts must be at least 1".into()));
        }
        if self.k2 == 0 || self.k2 % 2 == 0 {
            return Err(Error::Domain(format!(
                "ENN neighbour count {} must be odd and positive",
                self.k2
            )));
        }
        let t = self.target_event_fraction;
        if !(t > 0.0 && t <= 0.5) {
            return Err(Error::Domain(format!(
                "target minority fraction {t} must lie in (0, 0.5]"
            )));
        }
        Ok(())
    }
}

/// Result of [`apply_correction`]. When `applied` is false the dataset is the
/// unmodified input and `note` says why.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionOutcome {
    pub dataset: Dataset,
    pub applied: bool,
    pub note: String,
}

struct Classes {
    minority: u8,
    min_rows: Vec<usize>,
    maj_rows: Vec<usize>,
}

fn classes(ds: &Dataset) -> Result<Classes> {
    let events = ds.indices_of(1);
    let non_events = ds.indices_of(0);
    if events.is_empty() || non_events.is_empty() {
        return Err(Error::Correction(format!(
            "both classes required ({} events, {} non-events)",
            events.len(),
            non_events.len()
        )));
    }
    Ok(if events.len() <= non_events.len() {
        Classes {
            minority: 1,
            min_rows: events,
            maj_rows: non_events,
        }
    } else {
        Classes {
            minority: 0,
            min_rows: non_events,
            maj_rows: events,
        }
    })
}

// Small slack so that e.g. 10 * 0.5 / 0.5 never rounds to 10.000000000000002.
const COUNT_SLACK: f64 = 1e-9;

fn check_target(target: f64) -> Result<()> {
    if target > 0.0 && target <= 0.5 {
        Ok(())
    } else {
        Err(Error::Correction(format!(
            "target minority fraction {target} must lie in (0, 0.5]"
        )))
    }
}

/// Minority count an over-sampler should reach: `⌊n_maj · t / (1 − t)⌋`.
fn oversample_target(n_min: usize, n_maj: usize, target: f64) -> usize {
    let want = (n_maj as f64 * target / (1.0 - target) + COUNT_SLACK).floor() as usize;
    want.max(n_min)
}

/// Row indices (into `ds`) kept by random under-sampling, shuffled.
pub fn rus_indices<R: Rng + ?Sized>(ds: &Dataset, target: f64, rng: &mut R) -> Result<Vec<usize>> {
    check_target(target)?;
    let c = classes(ds)?;
    let n_min = c.min_rows.len();
    let keep = ((n_min as f64 * (1.0 - target) / target) - COUNT_SLACK).ceil() as usize;
    let keep = keep.min(c.maj_rows.len());
    let mut out = c.min_rows.clone();
    out.extend(
        sample_without_replacement(rng, c.maj_rows.len(), keep)
            .into_iter()
            .map(|i| c.maj_rows[i]),
    );
    out.shuffle(rng);
    Ok(out)
}

/// Random under-sampling of the majority class, without replacement.
pub fn rus<R: Rng + ?Sized>(ds: &Dataset, target: f64, rng: &mut R) -> Result<Dataset> {
    Ok(ds.select(&rus_indices(ds, target, rng)?, Provenance::Corrected))
}

/// Row indices produced by random over-sampling: `0..n` followed by the
/// duplicated minority rows, in draw order.
pub fn ros_indices<R: Rng + ?Sized>(ds: &Dataset, target: f64, rng: &mut R) -> Result<Vec<usize>> {
    check_target(target)?;
    let c = classes(ds)?;
    let n_min = c.min_rows.len();
    let extra = oversample_target(n_min, c.maj_rows.len(), target) - n_min;
    let mut out: Vec<usize> = (0..ds.len()).collect();
    out.extend((0..extra).map(|_| c.min_rows[rng.random_range(0..n_min)]));
    Ok(out)
}

/// Random over-sampling of the minority class, with replacement.
pub fn ros<R: Rng + ?Sized>(ds: &Dataset, target: f64, rng: &mut R) -> Result<Dataset> {
    Ok(ds.select(&ros_indices(ds, target, rng)?, Provenance::Corrected))
}

/// Provenance of one synthetic SMOTE row: `row = base + u · (neighbor − base)`
/// with `base` and `neighbor` indices into the input dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticDraw {
    pub base: usize,
    pub neighbor: usize,
    pub u: f64,
}

/// SMOTE output with the per-row interpolation record.
#[derive(Debug, Clone)]
pub struct SmoteOutput {
    /// Input rows in their original order, followed by the synthetic rows.
    pub dataset: Dataset,
    pub draws: Vec<SyntheticDraw>,
    pub notes: Vec<String>,
}

/// SMOTE with the interpolation record exposed.
///
/// Base rows are drawn uniformly with replacement from the minority class;
/// each is paired with one of its `min(k, n_min − 1)` nearest minority
/// neighbours, chosen uniformly.
pub fn smote_traced<R: Rng + ?Sized>(
    ds: &Dataset,
    k: usize,
    target: f64,
    rng: &mut R,
) -> Result<SmoteOutput> {
    check_target(target)?;
    if k == 0 {
        return Err(Error::Correction("SMOTE needs k >= 1".into()));
    }
    let c = classes(ds)?;
    let n_min = c.min_rows.len();
    let n_new = oversample_target(n_min, c.maj_rows.len(), target) - n_min;
    let mut notes = Vec::new();

    let k_eff = k.min(n_min - 1);
    if n_min == 1 {
        notes.push("single minority row: synthetic rows are duplicates".to_string());
    } else if k_eff < k {
        notes.push(format!("k reduced from {k} to {k_eff} (minority size {n_min})"));
    }
    let neighbor_lists: Vec<Vec<usize>> = c
        .min_rows
        .iter()
        .map(|&i| neighbors::nearest(&ds.features, &c.min_rows, i, k_eff))
        .collect();

    let mut features = ds.features.clone();
    let mut outcome = ds.outcome.clone();
    let mut draws = Vec::with_capacity(n_new);
    let mut row = vec![0.0; ds.n_features()];
    for _ in 0..n_new {
        let slot = rng.random_range(0..n_min);
        let base = c.min_rows[slot];
        let (neighbor, u) = if k_eff == 0 {
            (base, 0.0)
        } else {
            let nb = &neighbor_lists[slot];
            (nb[rng.random_range(0..nb.len())], rng.random::<f64>())
        };
        let (xb, xn) = (ds.row(base), ds.row(neighbor));
        for (j, v) in row.iter_mut().enumerate() {
            *v = xb[j] + u * (xn[j] - xb[j]);
        }
        features.push_row(&row);
        outcome.push(c.minority);
        draws.push(SyntheticDraw { base, neighbor, u });
    }
    Ok(SmoteOutput {
        dataset: Dataset {
            features,
            outcome,
            provenance: Provenance::Corrected,
        },
        draws,
        notes,
    })
}

pub fn smote<R: Rng + ?Sized>(ds: &Dataset, k: usize, target: f64, rng: &mut R) -> Result<Dataset> {
    smote_traced(ds, k, target, rng).map(|o| o.dataset)
}

/// Rows flagged by Wilson's rule: a row is flagged when its label differs
/// from the majority label of its `k2` nearest other rows. When
/// `only_label` is set, rows with other labels are never flagged.
pub fn enn_flags(ds: &Dataset, k2: usize, only_label: Option<u8>) -> Result<Vec<bool>> {
    if k2 == 0 {
        return Err(Error::Correction("ENN needs k2 >= 1".into()));
    }
    if ds.len() < k2 + 1 {
        return Err(Error::Correction(format!(
            "ENN needs at least {} rows, got {}",
            k2 + 1,
            ds.len()
        )));
    }
    let all: Vec<usize> = (0..ds.len()).collect();
    Ok((0..ds.len())
        .map(|i| {
            if only_label.is_some_and(|l| l != ds.outcome[i]) {
                return false;
            }
            let nb = neighbors::nearest(&ds.features, &all, i, k2);
            let events = nb.iter().filter(|&&j| ds.outcome[j] == 1).count();
            let majority = match (2 * events).cmp(&nb.len()) {
                std::cmp::Ordering::Greater => Some(1),
                std::cmp::Ordering::Less => Some(0),
                std::cmp::Ordering::Equal => None,
            };
            majority.is_some_and(|m| m != ds.outcome[i])
        })
        .collect())
}

fn enn_scoped(ds: &Dataset, k2: usize, only_label: Option<u8>) -> Result<Dataset> {
    let flags = enn_flags(ds, k2, only_label)?;
    let keep: Vec<usize> = (0..ds.len()).filter(|&i| !flags[i]).collect();
    let events = keep.iter().filter(|&&i| ds.outcome[i] == 1).count();
    if events == 0 || events == keep.len() {
        return Err(Error::Correction(format!(
            "ENN would remove every row of a class ({} of {} rows flagged)",
            ds.len() - keep.len(),
            ds.len()
        )));
    }
    Ok(ds.select(&keep, Provenance::Corrected))
}

/// Single-pass edited nearest neighbours over both classes. All removals are
/// decided on the input before any row is dropped.
pub fn enn(ds: &Dataset, k2: usize) -> Result<Dataset> {
    enn_scoped(ds, k2, None)
}

/// SMOTE with `k1` neighbours followed by ENN with `k2` neighbours. Returns
/// the dataset and any notes; an ENN failure leaves the SMOTE output in
/// place with a note.
pub fn senn_with_scope<R: Rng + ?Sized>(
    ds: &Dataset,
    k1: usize,
    k2: usize,
    target: f64,
    scope: EnnScope,
    rng: &mut R,
) -> Result<(Dataset, Vec<String>)> {
    let majority_label = classes(ds)?.minority ^ 1;
    let out = smote_traced(ds, k1, target, rng)?;
    let mut notes = out.notes;
    let only = match scope {
        EnnScope::AllClasses => None,
        EnnScope::MajorityOnly => Some(majority_label),
    };
    match enn_scoped(&out.dataset, k2, only) {
        Ok(edited) => Ok((edited, notes)),
        Err(e) => {
            notes.push(format!("ENN step skipped: {e}"));
            Ok((out.dataset, notes))
        }
    }
}

pub fn senn<R: Rng + ?Sized>(
    ds: &Dataset,
    k1: usize,
    k2: usize,
    target: f64,
    rng: &mut R,
) -> Result<Dataset> {
    senn_with_scope(ds, k1, k2, target, EnnScope::AllClasses, rng).map(|(d, _)| d)
}

/// Apply `spec` to the training data. Never fails: any error yields the
/// input unchanged with `applied = false` and the reason in `note`.
pub fn apply_correction<R: Rng + ?Sized>(
    spec: &CorrectionSpec,
    ds: &Dataset,
    rng: &mut R,
) -> CorrectionOutcome {
    let t = spec.target_event_fraction;
    let result: Result<(Dataset, Vec<String>)> = spec.validate().and_then(|()| match spec.kind {
        CorrectionKind::Control => Ok((ds.clone(), Vec::new())),
        CorrectionKind::Rus => rus(ds, t, rng).map(|d| (d, Vec::new())),
        CorrectionKind::Ros => ros(ds, t, rng).map(|d| (d, Vec::new())),
        CorrectionKind::Smote => smote_traced(ds, spec.k, t, rng).map(|o| (o.dataset, o.notes)),
        CorrectionKind::Senn => senn_with_scope(ds, spec.k1, spec.k2, t, spec.enn_scope, rng),
    });
    match result {
        Ok((dataset, notes)) => CorrectionOutcome {
            dataset,
            applied: true,
            note: notes.join("; "),
        },
        Err(e) => CorrectionOutcome {
            dataset: ds.clone(),
            applied: false,
            note: format!("{}: {e}; uncorrected data used", spec.kind),
        },
    }
}
