//! Small dense matrices: Cholesky, cyclic Jacobi and the symmetric-definite
//! generalized eigenproblem.

use std::ops::{Index, IndexMut};

use crate::error::{check_len, Error, Result};

/// Row-major dense matrix. Used for the coarse-level and Ritz problems.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

/// A dense matrix that callers treat as symmetric.
pub type DenseSym = DenseMatrix;

impl DenseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_row_major(nrows: usize, ncols: usize, data: Vec<f64>) -> Result<Self> {
        check_len(nrows * ncols, data.len())?;
        Ok(Self { nrows, ncols, data })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.ncols..(r + 1) * self.ncols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.nrows).map(|r| self[(r, c)]).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.ncols, x.len())?;
        Ok((0..self.nrows).map(|r| dot(self.row(r), x)).collect())
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        check_len(self.ncols, other.nrows)?;
        let mut out = DenseMatrix::zeros(self.nrows, other.ncols);
        for i in 0..self.nrows {
            for k in 0..self.ncols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.ncols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.ncols, self.nrows);
        for i in 0..self.nrows {
            for j in 0..self.ncols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &DenseMatrix) -> Result<DenseMatrix> {
        check_len(self.data.len(), other.data.len())?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + alpha * b)
            .collect();
        Ok(DenseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            data,
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Lower Cholesky factor `L` with `self = L L^T`.
    pub fn cholesky(&self) -> Result<DenseMatrix> {
        check_len(self.nrows, self.ncols)?;
        let n = self.nrows;
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) {
                return Err(Error::Numerical(format!(
                    "matrix not positive definite: Cholesky pivot {j} is {d:e}"
                )));
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                let (ri, rj) = (i * n, j * n);
                for k in 0..j {
                    s -= l.data[ri + k] * l.data[rj + k];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(l)
    }

    pub(crate) fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.ncols + c]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.ncols + c]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `L y = b` in place.
pub fn forward_substitute(l: &DenseMatrix, b: &mut [f64]) {
    let n = l.nrows();
    for i in 0..n {
        let row = l.row(i);
        let mut s = b[i];
        for k in 0..i {
            s -= row[k] * b[k];
        }
        b[i] = s / row[i];
    }
}

/// Solves `L^T x = b` in place.
pub fn backward_substitute_transposed(l: &DenseMatrix, b: &mut [f64]) {
    let n = l.nrows();
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[(k, i)] * b[k];
        }
        b[i] = s / l[(i, i)];
    }
}

/// Eigen-decomposition of a symmetric matrix (Householder tridiagonalization
/// plus implicit QR).
///
/// Returns unsorted eigenvalues and the matrix whose columns are the
/// corresponding orthonormal eigenvectors.
pub fn symmetric_eigen(a: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    check_len(a.nrows(), a.ncols())?;
    let n = a.nrows();
    if n == 0 {
        return Ok((Vec::new(), DenseMatrix::zeros(0, 0)));
    }
    let m = nalgebra::DMatrix::from_row_slice(n, n, a.as_slice());
    let eig = m.symmetric_eigen();
    let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "symmetric eigensolver produced non-finite values".into(),
        ));
    }
    let mut v = DenseMatrix::zeros(n, n);
    for c in 0..n {
        for r in 0..n {
            v[(r, c)] = eig.eigenvectors[(r, c)];
        }
    }
    Ok((values, v))
}

/// Leading eigenpairs of a symmetric-definite pencil.
#[derive(Debug, Clone)]
pub struct GenEig {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// `M`-orthonormal eigenvectors, one per value.
    pub vectors: Vec<Vec<f64>>,
}

/// Flips `v` so that its largest-magnitude entry is positive.
pub fn fix_sign(v: &mut [f64]) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// First `k` eigenpairs of `A x = lambda M x` with `M` symmetric positive
/// definite, via `M = L L^T` and a symmetric eigensolve of `L^{-1} A L^{-T}`.
pub fn dense_geneig(a: &DenseSym, m: &DenseSym, k: usize) -> Result<GenEig> {
    check_len(a.nrows(), a.ncols())?;
    check_len(a.nrows(), m.nrows())?;
    check_len(m.nrows(), m.ncols())?;
    let n = a.nrows();
    if k > n {
        return Err(Error::Config(format!(
            "requested {k} eigenpairs of a {n}x{n} pencil"
        )));
    }
    let l = m.cholesky()?;

    // X = L^{-1} A, column by column (A symmetric, so rows of A are columns)
    let mut x = DenseMatrix::zeros(n, n);
    let mut col = vec![0.0; n];
    for j in 0..n {
        col.copy_from_slice(a.row(j));
        forward_substitute(&l, &mut col);
        for i in 0..n {
            x[(i, j)] = col[i];
        }
    }
    // C = L^{-1} X^T
    let mut c = DenseMatrix::zeros(n, n);
    for j in 0..n {
        col.copy_from_slice(x.row(j));
        forward_substitute(&l, &mut col);
        for i in 0..n {
            c[(i, j)] = col[i];
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let s = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = s;
            c[(j, i)] = s;
        }
    }

    let (evals, evecs) = symmetric_eigen(&c)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| evals[i].total_cmp(&evals[j]).then(i.cmp(&j)));

    let mut values = Vec::with_capacity(k);
    let mut vectors = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let mut y = evecs.column(idx);
        backward_substitute_transposed(&l, &mut y);
        let my = m.matvec(&y)?;
        let norm = dot(&y, &my).sqrt();
        y.iter_mut().for_each(|v| *v /= norm);
        fix_sign(&mut y);
        values.push(evals[idx]);
        vectors.push(y);
    }
    Ok(GenEig { values, vectors })
}
