//! Row-major sample matrix and per-column standardization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{from_usize, Scalar};

/// `n × d` table of observations, column-indexed by variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
    names: Vec<String>,
}

pub fn default_names(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("X{j}")).collect()
}

impl<T: Scalar> SampleMatrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension { expected: rows * cols, got: data.len() });
        }
        Ok(Self { rows, cols, data, names: default_names(cols) })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::Dimension { expected: cols, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn from_columns(columns: &[Vec<T>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().find(|c| c.len() != rows) {
            return Err(Error::Dimension { expected: rows, got: bad.len() });
        }
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            data.extend(columns.iter().map(|c| c[i]));
        }
        Self::new(rows, cols, data)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.cols {
            return Err(Error::Dimension { expected: self.cols, got: names.len() });
        }
        self.names = names;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.rows
    }

    pub fn d(&self) -> usize {
        self.cols
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Columns in the given order (also used to permute by an ordering).
    pub fn select_columns(&self, idx: &[usize]) -> Result<Self> {
        if let Some(&bad) = idx.iter().find(|&&j| j >= self.cols) {
            return Err(Error::Dimension { expected: self.cols, got: bad + 1 });
        }
        let mut data = Vec::with_capacity(self.rows * idx.len());
        for i in 0..self.rows {
            let r = self.row(i);
            data.extend(idx.iter().map(|&j| r[j]));
        }
        Ok(Self { rows: self.rows, cols: idx.len(), data, names: idx.iter().map(|&j| self.names[j].clone()).collect() })
    }

    /// Stacks `times` copies of the rows.
    pub fn replicate(&self, times: usize) -> Self {
        let data = (0..times).flat_map(|_| self.data.iter().copied()).collect();
        Self { rows: self.rows * times, cols: self.cols, data, names: self.names.clone() }
    }

    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.rows);
        Self { rows: n, cols: self.cols, data: self.data[..n * self.cols].to_vec(), names: self.names.clone() }
    }

    pub fn map<U: Scalar, F: Fn(T) -> U>(&self, f: F) -> SampleMatrix<U> {
        SampleMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
            names: self.names.clone(),
        }
    }

    /// Index of the first non-finite entry, as `(row, col)`.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.data.iter().position(|x| !x.is_finite()).map(|p| (p / self.cols, p % self.cols))
    }
}

/// Per-column affine transform `z = (x - mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization<T> {
    pub mean: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Scalar> Standardization<T> {
    pub fn identity(d: usize) -> Self {
        Self { mean: vec![T::zero(); d], scale: vec![T::one(); d] }
    }

    /// Sample mean and (n-1)-normalized standard deviation per column.
    pub fn fit(samples: &SampleMatrix<T>) -> Result<Self> {
        let n = samples.n();
        if n < 2 {
            return Err(Error::Data(format!("need at least 2 samples to standardize, got {n}")));
        }
        if let Some((i, j)) = samples.first_non_finite() {
            return Err(Error::Data(format!("non-finite value at row {i}, column {j}")));
        }
        let d = samples.d();
        let nf = from_usize::<T>(n);
        let mut mean = vec![T::zero(); d];
        for r in samples.rows() {
            for j in 0..d {
                mean[j] = mean[j] + r[j];
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / nf);
        let mut var = vec![T::zero(); d];
        for r in samples.rows() {
            for j in 0..d {
                let c = r[j] - mean[j];
                var[j] = var[j] + c * c;
            }
        }
        let scale: Vec<T> = var.into_iter().map(|v| (v / from_usize::<T>(n - 1)).sqrt()).collect();
        if let Some(j) = scale.iter().position(|s| !(*s > T::zero()) || !s.is_finite()) {
            return Err(Error::Data(format!("column {j} has zero or non-finite spread")));
        }
        Ok(Self { mean, scale })
    }

    pub fn apply_point(&self, x: &[T]) -> Vec<T> {
        x.iter().zip(&self.mean).zip(&self.scale).map(|((&v, &m), &s)| (v - m) / s).collect()
    }

    pub fn apply(&self, samples: &SampleMatrix<T>) -> Result<SampleMatrix<T>> {
        if samples.d() != self.mean.len() {
            return Err(Error::Dimension { expected: self.mean.len(), got: samples.d() });
        }
        let mut out = samples.clone();
        let d = self.mean.len();
        for (p, v) in out.data.iter_mut().enumerate() {
            let j = p % d;
            *v = (*v - self.mean[j]) / self.scale[j];
        }
        Ok(out)
    }

    /// `log |det|` of the standardizing Jacobian, `-Σ log scale_j`.
    pub fn log_jacobian(&self) -> T {
        -self.scale.iter().map(|s| s.ln()).sum::<T>()
    }
}
