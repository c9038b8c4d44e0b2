use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Input matrix: one row per data source, one column per time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FeatureDoc", into = "FeatureDoc")]
pub struct FeatureMatrix {
    labels: Vec<String>,
    n_steps: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FeatureDoc {
    source_labels: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl TryFrom<FeatureDoc> for FeatureMatrix {
    type Error = Error;

    fn try_from(doc: FeatureDoc) -> Result<Self> {
        FeatureMatrix::from_rows(doc.source_labels, doc.rows)
    }
}

impl From<FeatureMatrix> for FeatureDoc {
    fn from(m: FeatureMatrix) -> Self {
        FeatureDoc {
            rows: (0..m.n_sources()).map(|r| m.row(r).to_vec()).collect(),
            source_labels: m.labels,
        }
    }
}

impl FeatureMatrix {
    pub fn from_rows(labels: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() != rows.len() {
            return Err(Error::Dimension(format!(
                "{} source labels for {} rows",
                labels.len(),
                rows.len()
            )));
        }
        if rows.is_empty() {
            return Err(Error::Empty("feature matrix has no sources".into()));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::Validation(format!("duplicate source label `{l}`")));
            }
        }
        let n_steps = rows[0].len();
        if n_steps == 0 {
            return Err(Error::Empty("feature matrix has no time steps".into()));
        }
        let mut data = Vec::with_capacity(n_steps * rows.len());
        for (label, row) in labels.iter().zip(&rows) {
            if row.len() != n_steps {
                return Err(Error::Dimension(format!(
                    "source `{label}` has {} steps, expected {n_steps}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("source `{label}`")));
            }
            data.extend_from_slice(row);
        }
        Ok(FeatureMatrix { labels, n_steps, data })
    }

    /// Unlabelled matrix with sources named `x0`, `x1`, ...
    pub fn unlabeled(rows: Vec<Vec<f64>>) -> Result<Self> {
        let labels = (0..rows.len()).map(|i| format!("x{i}")).collect();
        FeatureMatrix::from_rows(labels, rows)
    }

    pub fn n_sources(&self) -> usize {
        self.labels.len()
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn source_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn get(&self, source: usize, step: usize) -> f64 {
        self.data[source * self.n_steps + step]
    }

    pub fn row(&self, source: usize) -> &[f64] {
        &self.data[source * self.n_steps..(source + 1) * self.n_steps]
    }

    pub(crate) fn row_mut(&mut self, source: usize) -> &mut [f64] {
        &mut self.data[source * self.n_steps..(source + 1) * self.n_steps]
    }

    /// Input vector at one time step.
    pub fn column(&self, step: usize) -> Vec<f64> {
        (0..self.n_sources()).map(|s| self.get(s, step)).collect()
    }

    pub fn set(&mut self, source: usize, step: usize, v: f64) {
        self.data[source * self.n_steps + step] = v;
    }
}

/// Output matrix: `p` output dimensions by `q` time steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TargetDoc", into = "TargetDoc")]
pub struct TargetMatrix {
    p: usize,
    q: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TargetDoc {
    rows: Vec<Vec<f64>>,
}

impl TryFrom<TargetDoc> for TargetMatrix {
    type Error = Error;

    fn try_from(doc: TargetDoc) -> Result<Self> {
        TargetMatrix::from_rows(doc.rows)
    }
}

impl From<TargetMatrix> for TargetDoc {
    fn from(m: TargetMatrix) -> Self {
        TargetDoc {
            rows: (0..m.p).map(|r| m.row(r).to_vec()).collect(),
        }
    }
}

impl TargetMatrix {
    pub fn zeros(p: usize, q: usize) -> Self {
        TargetMatrix {
            p,
            q,
            data: vec![0.0; p * q],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let p = rows.len();
        if p == 0 || rows[0].is_empty() {
            return Err(Error::Empty("target matrix is empty".into()));
        }
        let q = rows[0].len();
        let mut data = Vec::with_capacity(p * q);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != q {
                return Err(Error::Dimension(format!(
                    "target row {i} has {} steps, expected {q}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("target row {i}")));
            }
            data.extend_from_slice(row);
        }
        Ok(TargetMatrix { p, q, data })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.p, self.q)
    }

    pub fn get(&self, dim: usize, step: usize) -> f64 {
        self.data[dim * self.q + step]
    }

    pub fn set(&mut self, dim: usize, step: usize, v: f64) {
        self.data[dim * self.q + step] = v;
    }

    pub fn row(&self, dim: usize) -> &[f64] {
        &self.data[dim * self.q..(dim + 1) * self.q]
    }

    /// Row-major values.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> TargetMatrix {
        TargetMatrix {
            p: self.p,
            q: self.q,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }
}
