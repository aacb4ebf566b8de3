//! Dense vectors and row-major matrices over f64.

use crate::error::{Error, Result};

/// A dense real vector. The checked constructor rejects empty or
/// non-finite data; internal hot paths use `From<Vec<f64>>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Domain("vector must be non-empty".into()));
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("vector construction".into()));
        }
        Ok(Vector(data))
    }

    pub fn zeros(n: usize) -> Self {
        Vector(vec![0.0; n])
    }

    /// Standard basis vector e_j.
    pub fn basis(n: usize, j: usize) -> Self {
        let mut v = vec![0.0; n];
        v[j] = 1.0;
        Vector(v)
    }

    pub fn from_fn(n: usize, f: impl Fn(usize) -> f64) -> Self {
        Vector((0..n).map(f).collect())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn add(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.len(), other.len());
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.len(), other.len());
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, c: f64) -> Vector {
        Vector(self.0.iter().map(|a| a * c).collect())
    }

    /// self + alpha * other
    pub fn axpy(&self, alpha: f64, other: &Vector) -> Vector {
        debug_assert_eq!(self.len(), other.len());
        Vector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + alpha * b)
                .collect(),
        )
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn sq_norm(&self) -> f64 {
        self.0.iter().map(|a| a * a).sum()
    }

    pub fn norm(&self) -> f64 {
        self.sq_norm().sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.len() as f64
    }
}

impl From<Vec<f64>> for Vector {
    fn from(data: Vec<f64>) -> Self {
        Vector(data)
    }
}

impl From<&[f64]> for Vector {
    fn from(data: &[f64]) -> Self {
        Vector(data.to_vec())
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    #[inline]
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for Vector {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// A dense row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("matrix construction".into()));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Column-stacking constructor; panics on ragged input.
    pub fn from_columns(cols: &[Vector]) -> Self {
        let rows = cols[0].len();
        Matrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// y = M x
    pub fn matvec(&self, x: &Vector) -> Vector {
        debug_assert_eq!(self.cols, x.len());
        let xs = x.as_slice();
        let mut y = Vec::with_capacity(self.rows);
        for i in 0..self.rows {
            let row = self.row(i);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(xs) {
                acc += a * b;
            }
            y.push(acc);
        }
        Vector(y)
    }

    /// y = Mᵀ x
    pub fn matvec_t(&self, x: &Vector) -> Vector {
        debug_assert_eq!(self.rows, x.len());
        let mut y = vec![0.0; self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            let row = self.row(i);
            for (yj, a) in y.iter_mut().zip(row) {
                *yj += xi * a;
            }
        }
        Vector(y)
    }

    /// self += alpha * g xᵀ (rank-one update, used by matvec backward)
    pub fn add_outer_scaled(&mut self, g: &Vector, x: &Vector, alpha: f64) {
        debug_assert_eq!(self.rows, g.len());
        debug_assert_eq!(self.cols, x.len());
        let xs = x.as_slice();
        for i in 0..self.rows {
            let gi = alpha * g[i];
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (r, b) in row.iter_mut().zip(xs) {
                *r += gi * b;
            }
        }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        debug_assert_eq!(self.data.len(), other.data.len());
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        debug_assert_eq!(self.data.len(), other.data.len());
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|a| a * a).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }
}
