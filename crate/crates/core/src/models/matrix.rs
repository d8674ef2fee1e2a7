use serde::{Deserialize, Serialize};

use super::ModelError;

/// Dense row-major feature matrix with named columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    columns: Vec<String>,
    n_rows: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(columns: Vec<String>, data: Vec<f64>) -> Result<Self, ModelError> {
        let width = columns.len();
        if width == 0 {
            if !data.is_empty() {
                return Err(ModelError::Shape("data without columns".into()));
            }
            return Ok(Self { columns, n_rows: 0, data });
        }
        if data.len() % width != 0 {
            return Err(ModelError::Shape(format!(
                "{} values do not fill rows of width {width}",
                data.len()
            )));
        }
        Ok(Self { n_rows: data.len() / width, columns, data })
    }

    /// Columns named `x0, x1, ...`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ModelError> {
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(ModelError::Shape("ragged rows".into()));
        }
        let columns = (0..width).map(|i| format!("x{i}")).collect();
        Self::new(columns, rows.concat())
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.columns.len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.columns.len() + j]
    }

    /// Rows at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.n_cols());
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix { columns: self.columns.clone(), n_rows: idx.len(), data }
    }

    /// Fails with the first column whose name differs from `expected`.
    pub fn check_schema(&self, expected: &[String]) -> Result<(), ModelError> {
        if let Some(i) = (0..expected.len().max(self.columns.len()))
            .find(|&i| expected.get(i) != self.columns.get(i))
        {
            let name = |v: Option<&String>| v.cloned().unwrap_or_else(|| "<none>".into());
            return Err(ModelError::SchemaMismatch {
                index: i,
                expected: name(expected.get(i)),
                found: name(self.columns.get(i)),
            });
        }
        Ok(())
    }
}
