//! Small dense matrices and the column-wise normalizers used by attention.

use std::ops::{Deref, Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::{Rational, Scalar};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, S::zero())
    }

    pub fn filled(rows: usize, cols: usize, value: S) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { S::one() } else { S::zero() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                context: "Matrix::from_vec",
                expected: (rows, cols),
                actual: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from rows; all rows must have equal length.
    pub fn from_rows(rows: Vec<Vec<S>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::Shape {
                    context: "Matrix::from_rows",
                    expected: (r, c),
                    actual: (r, row.len()),
                });
            }
            data.extend(row);
        }
        Ok(Self {
            rows: r,
            cols: c,
            data,
        })
    }

    /// Column vector (`len × 1`).
    pub fn column_vector(v: Vec<S>) -> Self {
        let n = v.len();
        Self {
            rows: n,
            cols: 1,
            data: v,
        }
    }

    /// Row vector (`1 × len`).
    pub fn row_vector(v: Vec<S>) -> Self {
        let n = v.len();
        Self {
            rows: 1,
            cols: n,
            data: v,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn row(&self, i: usize) -> Vec<S> {
        self.data[i * self.cols..(i + 1) * self.cols].to_vec()
    }

    pub fn column(&self, j: usize) -> Vec<S> {
        (0..self.rows).map(|i| self[(i, j)].clone()).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<S>> {
        (0..self.rows).map(|i| self.row(i)).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[S]) {
        assert_eq!(values.len(), self.rows);
        for (i, v) in values.iter().enumerate() {
            self[(i, j)] = v.clone();
        }
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> Matrix<T> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn to_f64(&self) -> Matrix<f64> {
        self.map(S::to_f64)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].clone())
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::Shape {
                context: "matmul",
                expected: (self.cols, rhs.cols),
                actual: rhs.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    let prod = a.clone() * rhs[(k, j)].clone();
                    let cell = &mut out[(i, j)];
                    *cell = cell.clone() + prod;
                }
            }
        }
        Ok(out)
    }

    fn zip_with(&self, rhs: &Self, context: &'static str, f: impl Fn(&S, &S) -> S) -> Result<Self> {
        if self.shape() != rhs.shape() {
            return Err(Error::Shape {
                context,
                expected: self.shape(),
                actual: rhs.shape(),
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, "add", |a, b| a.clone() + b.clone())
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, "sub", |a, b| a.clone() - b.clone())
    }

    pub fn scale(&self, factor: &S) -> Self {
        self.map(|v| v.clone() * factor.clone())
    }

    /// Adds `v 1ᵀ`: the vector `v` to every column.
    pub fn add_column_broadcast(&self, v: &[S]) -> Result<Self> {
        if v.len() != self.rows {
            return Err(Error::Shape {
                context: "add_column_broadcast",
                expected: (self.rows, 1),
                actual: (v.len(), 1),
            });
        }
        Ok(Self::from_fn(self.rows, self.cols, |i, j| {
            self[(i, j)].clone() + v[i].clone()
        }))
    }

    /// Right-multiplication by the permutation matrix `P` with
    /// `(X P)[:, j] = X[:, perm[j]]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.cols);
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, perm[j])].clone())
    }

    pub fn max_abs_diff(&self, rhs: &Self) -> f64 {
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| (a.to_f64() - b.to_f64()).abs())
            .fold(0.0, f64::max)
    }
}

impl<S> Index<(usize, usize)> for Matrix<S> {
    type Output = S;
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.cols + j]
    }
}

impl<S> IndexMut<(usize, usize)> for Matrix<S> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.cols + j]
    }
}

impl Matrix<Rational> {
    /// Renders entries as `p/q` strings, used for counterexamples.
    pub fn to_strings(&self) -> Vec<Vec<String>> {
        self.to_rows()
            .iter()
            .map(|r| r.iter().map(crate::scalar::format_rational).collect())
            .collect()
    }
}

/// A `d × n` matrix whose columns are token embeddings; `n ≥ 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqMatrix<S>(Matrix<S>);

impl<S: Scalar> SeqMatrix<S> {
    pub fn new(m: Matrix<S>) -> Result<Self> {
        if m.cols() < 2 {
            return Err(Error::SequenceTooShort(m.cols()));
        }
        if m.rows() < 1 {
            return Err(Error::Shape {
                context: "SeqMatrix",
                expected: (1, m.cols()),
                actual: m.shape(),
            });
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: Vec<Vec<S>>) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn d(&self) -> usize {
        self.0.rows()
    }

    pub fn n(&self) -> usize {
        self.0.cols()
    }

    pub fn as_matrix(&self) -> &Matrix<S> {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix<S> {
        self.0
    }

    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        Self(self.0.permute_columns(perm))
    }

    pub fn to_f64(&self) -> SeqMatrix<f64> {
        SeqMatrix(self.0.to_f64())
    }
}

impl<S> Deref for SeqMatrix<S> {
    type Target = Matrix<S>;
    fn deref(&self) -> &Matrix<S> {
        &self.0
    }
}

/// Column-wise softmax of `λ·M`. Only available in float mode.
pub fn softmax_columns<S: Scalar>(m: &Matrix<S>, lambda: f64) -> Result<Matrix<S>> {
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "softmax temperature must be positive, got {lambda}"
        )));
    }
    let lam = S::from_f64(lambda);
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for j in 0..m.cols() {
        let col: Vec<S> = m.column(j).into_iter().map(|v| v * lam.clone()).collect();
        let Some(max) = S::max_of(&col) else { continue };
        let exps = col
            .into_iter()
            .map(|v| (v - max.clone()).exp())
            .collect::<Result<Vec<_>>>()?;
        let total = exps.iter().cloned().fold(S::zero(), |a, b| a + b);
        for (i, e) in exps.into_iter().enumerate() {
            out[(i, j)] = e / total.clone();
        }
    }
    Ok(out)
}

/// Column-wise hardmax: the `k` entries tied for the column maximum get `1/k`.
pub fn hardmax_columns<S: Scalar>(m: &Matrix<S>) -> Matrix<S> {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for j in 0..m.cols() {
        let col = m.column(j);
        let Some(max) = S::max_of(&col) else { continue };
        let winners: Vec<usize> = (0..col.len()).filter(|&i| col[i].ties_with(&max)).collect();
        let weight = S::one() / S::from_i64(winners.len() as i64);
        for i in winners {
            out[(i, j)] = weight.clone();
        }
    }
    out
}

/// Entry-wise `ℓp` norm, evaluated in `f64`.
pub fn entrywise_lp_norm<S: Scalar>(m: &Matrix<S>, p: f64) -> Result<f64> {
    Ok(entrywise_lp_pow(m, p)?.powf(1.0 / p))
}

/// `Σ |M_ij|^p`, the `p`-th power of [`entrywise_lp_norm`].
pub fn entrywise_lp_pow<S: Scalar>(m: &Matrix<S>, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 || !p.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "p must lie in [1, inf), got {p}"
        )));
    }
    Ok(m.data().iter().map(|v| v.to_f64().abs().powf(p)).sum())
}
