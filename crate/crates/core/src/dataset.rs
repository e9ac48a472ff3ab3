//! Feature matrices and labelled datasets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of predictor values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, n_cols: usize) -> Result<Self> {
        if n_cols == 0 {
            return Err(Error::Interface(
                "use FeatureMatrix::zero_width for matrices without columns".into(),
            ));
        }
        if data.len() % n_cols != 0 {
            return Err(Error::Interface(format!(
                "{} values do not fill rows of width {n_cols}",
                data.len()
            )));
        }
        Ok(Self {
            n_rows: data.len() / n_cols,
            data,
            n_cols,
        })
    }

    /// Matrix with `n_rows` rows and no columns (intercept-only models).
    pub fn zero_width(n_rows: usize) -> Self {
        Self {
            data: Vec::new(),
            n_rows,
            n_cols: 0,
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != n_cols {
                return Err(Error::Interface(format!(
                    "row {i} has {} values, expected {n_cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            data,
            n_rows: rows.len(),
            n_cols,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n_rows).map(move |i| self.row(i))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Column `j` copied into a contiguous vector.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// New matrix holding the listed rows, in order (repeats allowed).
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            data,
            n_rows: indices.len(),
            n_cols: self.n_cols,
        }
    }

    pub(crate) fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.n_cols);
        self.data.extend_from_slice(row);
        self.n_rows += 1;
    }
}

/// Where a dataset came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Generated,
    Corrected,
    External,
}

/// Feature matrix plus binary outcome vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: FeatureMatrix,
    pub outcome: Vec<u8>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(features: FeatureMatrix, outcome: Vec<u8>, provenance: Provenance) -> Result<Self> {
        if features.n_rows() != outcome.len() {
            return Err(Error::Interface(format!(
                "{} feature rows but {} outcomes",
                features.n_rows(),
                outcome.len()
            )));
        }
        if let Some(bad) = outcome.iter().find(|&&y| y > 1) {
            return Err(Error::Interface(format!("outcome value {bad} is not binary")));
        }
        Ok(Self {
            features,
            outcome,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.outcome.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcome.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.n_cols()
    }

    pub fn n_events(&self) -> usize {
        self.outcome.iter().filter(|&&y| y == 1).count()
    }

    pub fn n_non_events(&self) -> usize {
        self.len() - self.n_events()
    }

    pub fn event_fraction(&self) -> f64 {
        self.n_events() as f64 / self.len() as f64
    }

    pub fn has_both_classes(&self) -> bool {
        let e = self.n_events();
        e > 0 && e < self.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    /// Indices of rows carrying `label`, in ascending order.
    pub fn indices_of(&self, label: u8) -> Vec<usize> {
        self.outcome
            .iter()
            .enumerate()
            .filter_map(|(i, &y)| (y == label).then_some(i))
            .collect()
    }

    /// Rows at `indices` (repeats allowed), tagged with `provenance`.
    pub fn select(&self, indices: &[usize], provenance: Provenance) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            outcome: indices.iter().map(|&i| self.outcome[i]).collect(),
            provenance,
        }
    }
}
