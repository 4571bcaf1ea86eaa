use serde::{Deserialize, Serialize};

use super::ModelError;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
}

impl Matrix {
    pub fn new(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self, ModelError> {
        if data.len() != n_rows * n_cols {
            return Err(ModelError::Contract(format!(
                "{} values do not fill a {n_rows}x{n_cols} matrix",
                data.len()
            )));
        }
        Ok(Self { data, n_rows, n_cols })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ModelError> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(ModelError::Contract("ragged rows".into()));
        }
        Self::new(rows.len(), n_cols, rows.concat())
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

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n_cols + j] = v;
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols.max(1)).take(self.n_rows)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            data,
            n_rows: indices.len(),
            n_cols: self.n_cols,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Training inputs and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub x: Matrix,
    pub y: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(x: Matrix, y: Vec<f64>) -> Result<Self, ModelError> {
        if x.n_rows() != y.len() {
            return Err(ModelError::Contract(format!("{} rows but {} targets", x.n_rows(), y.len())));
        }
        if x.n_rows() == 0 || x.n_cols() == 0 {
            return Err(ModelError::Contract("feature matrix needs n >= 1 and d >= 1".into()));
        }
        if x.as_slice().iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(ModelError::Contract("non-finite entry in feature matrix".into()));
        }
        Ok(Self { x, y })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.n_cols()
    }
}

pub const STDDEV_FLOOR: f64 = 1e-12;

/// Per-column centering and scaling fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stddevs: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Self {
        let n = x.n_rows() as f64;
        let mut means = Vec::with_capacity(x.n_cols());
        let mut stddevs = Vec::with_capacity(x.n_cols());
        for j in 0..x.n_cols() {
            let col = x.column(j);
            let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            // constant columns map exactly to zero
            let mean = if lo == hi { lo } else { col.iter().sum::<f64>() / n };
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            means.push(mean);
            stddevs.push(var.sqrt().max(STDDEV_FLOOR));
        }
        Self { means, stddevs }
    }

    /// Columns that were constant in training carry no information and map
    /// to zero for every input.
    pub fn transform_row(&self, row: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = if self.stddevs[j] > STDDEV_FLOOR {
                (row[j] - self.means[j]) / self.stddevs[j]
            } else {
                0.0
            };
        }
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        let mut data = vec![0.0; x.n_rows() * x.n_cols()];
        for (i, out) in data.chunks_exact_mut(x.n_cols().max(1)).enumerate().take(x.n_rows()) {
            self.transform_row(x.row(i), out);
        }
        Matrix::new(x.n_rows(), x.n_cols(), data).expect("same shape")
    }

    pub fn inverse_row(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(j, v)| v * self.stddevs[j] + self.means[j])
            .collect()
    }
}
