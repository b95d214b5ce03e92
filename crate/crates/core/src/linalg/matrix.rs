use std::fmt;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Dense row-major `f64` matrix.
///
/// Every reduction in this module runs over the inner index in ascending
/// order, so results are bit-reproducible for identical inputs.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix({}x{})", self.rows, self.cols)?;
        if self.rows * self.cols <= 64 {
            f.debug_list().entries(self.data.chunks(self.cols.max(1))).finish()?;
        }
        Ok(())
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::invalid(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_f32(rows: usize, cols: usize, data: &[f32]) -> Result<Self> {
        Self::from_vec(rows, cols, data.iter().map(|&x| f64::from(x)).collect())
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Entries drawn i.i.d. from N(0, 1).
    pub fn random_normal(rows: usize, cols: usize, rng: &mut Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.normal()).collect();
        Self { rows, cols, data }
    }

    /// Haar-ish random orthogonal matrix from Gram-Schmidt on a Gaussian draw.
    pub fn random_orthogonal(n: usize, rng: &mut Rng) -> Self {
        loop {
            let g = Self::random_normal(n, n, rng);
            if let Some(q) = g.orthonormalize_columns() {
                return q;
            }
        }
    }

    /// Modified Gram-Schmidt (two passes) over columns. `None` when the
    /// columns are numerically dependent.
    fn orthonormalize_columns(&self) -> Option<Self> {
        let (n, k) = (self.rows, self.cols);
        let mut cols: Vec<Vec<f64>> = (0..k).map(|j| self.col(j)).collect();
        for j in 0..k {
            for _pass in 0..2 {
                for p in 0..j {
                    let proj = dot(&cols[j], &cols[p]);
                    let (head, tail) = cols.split_at_mut(j);
                    for (x, q) in tail[0].iter_mut().zip(&head[p]) {
                        *x -= proj * q;
                    }
                }
            }
            let norm = dot(&cols[j], &cols[j]).sqrt();
            if norm < 1e-10 {
                return None;
            }
            cols[j].iter_mut().for_each(|x| *x /= norm);
        }
        let mut out = Self::zeros(n, k);
        for (j, c) in cols.iter().enumerate() {
            for (i, &x) in c.iter().enumerate() {
                out[(i, j)] = x;
            }
        }
        Some(out)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = Self::zeros(m, n);
        for i in 0..m {
            let a = self.row(i);
            let c = &mut out.data[i * n..(i + 1) * n];
            for (t, &a_it) in a.iter().enumerate().take(k) {
                let b = &other.data[t * n..(t + 1) * n];
                for (cj, &bj) in c.iter_mut().zip(b) {
                    *cj += a_it * bj;
                }
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ`, i.e. all pairwise row dot products.
    pub fn matmul_t(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::Shape {
                op: "matmul_t",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot(a, other.row(j));
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other`.
    pub fn t_matmul(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::Shape {
                op: "t_matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (m, n) = (self.cols, other.cols);
        let mut out = Self::zeros(m, n);
        for t in 0..self.rows {
            let a = self.row(t);
            let b = other.row(t);
            for (i, &a_ti) in a.iter().enumerate() {
                let c = &mut out.data[i * n..(i + 1) * n];
                for (cj, &bj) in c.iter_mut().zip(b) {
                    *cj += a_ti * bj;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(Error::Shape {
                op: "matvec",
                left: self.shape(),
                right: (v.len(), 1),
            });
        }
        Ok(self.row_iter().map(|r| dot(r, v)).collect())
    }

    pub fn row_norms(&self) -> Vec<f64> {
        self.row_iter().map(|r| dot(r, r).sqrt()).collect()
    }

    /// Column sums, accumulated top to bottom.
    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for r in self.row_iter() {
            for (acc, &x) in s.iter_mut().zip(r) {
                *acc += x;
            }
        }
        s
    }

    /// Adds `v` to every row.
    pub fn add_row_vector(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.cols);
        for i in 0..self.rows {
            for (x, &b) in self.row_mut(i).iter_mut().zip(v) {
                *x += b;
            }
        }
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

pub const NORM_EPS: f64 = 1e-12;

/// Scales every row to unit Euclidean norm.
pub fn l2_normalize_rows(m: &Matrix) -> Result<Matrix> {
    let mut out = m.clone();
    for i in 0..m.rows() {
        let r = out.row_mut(i);
        let norm = dot(r, r).sqrt();
        if !(norm > NORM_EPS) {
            return Err(Error::DegenerateRow { row: i, norm });
        }
        r.iter_mut().for_each(|x| *x /= norm);
    }
    Ok(out)
}
