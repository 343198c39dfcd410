//! SPD solves, optionally restricted to the `M`-orthogonal complement of one
//! vector.

use super::csr::CsrMatrix;
use super::dense::{backward_substitute_transposed, dot, forward_substitute, DenseMatrix};
use crate::error::{check_len, Error, Result};

/// Problems up to this size are factorized densely.
pub const DENSE_SOLVE_LIMIT: usize = 2000;

const CG_RTOL: f64 = 1e-12;

/// One-vector deflation: the solution is kept `M`-orthogonal to `w`.
#[derive(Debug, Clone)]
pub struct Deflation {
    /// `w` scaled so that `w^T M w = 1`.
    pub w: Vec<f64>,
    /// `M w` for the scaled `w`.
    pub mw: Vec<f64>,
}

impl Deflation {
    pub fn new(w: &[f64], mw: &[f64]) -> Result<Self> {
        check_len(w.len(), mw.len())?;
        let norm2 = dot(w, mw);
        if !(norm2 > 0.0) {
            return Err(Error::Numerical(format!(
                "deflation vector has non-positive metric norm {norm2:e}"
            )));
        }
        let s = 1.0 / norm2.sqrt();
        Ok(Self {
            w: w.iter().map(|v| v * s).collect(),
            mw: mw.iter().map(|v| v * s).collect(),
        })
    }

    pub fn with_sparse_metric(w: &[f64], metric: &CsrMatrix) -> Result<Self> {
        let mw = metric.spmv(w)?;
        Self::new(w, &mw)
    }

    pub fn with_dense_metric(w: &[f64], metric: &DenseMatrix) -> Result<Self> {
        let mw = metric.matvec(w)?;
        Self::new(w, &mw)
    }

    /// `rhs - (w^T rhs) M w`.
    pub fn deflate_dual(&self, rhs: &[f64]) -> Vec<f64> {
        let c = dot(&self.w, rhs);
        rhs.iter().zip(&self.mw).map(|(r, m)| r - c * m).collect()
    }

    /// `x - (w^T M x) w`.
    pub fn deflate_primal(&self, x: &mut [f64]) {
        let c = dot(&self.mw, x);
        x.iter_mut().zip(&self.w).for_each(|(v, w)| *v -= c * w);
    }
}

/// Cholesky factorization of a dense SPD matrix, or of its compression onto
/// the complement of `M w` when a deflation is supplied.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    n: usize,
    chol: DenseMatrix,
    reflector: Option<Reflector>,
    deflation: Option<Deflation>,
}

/// Householder reflector `H = I - beta h h^T`.
#[derive(Debug, Clone)]
struct Reflector {
    h: Vec<f64>,
    beta: f64,
}

impl Reflector {
    /// Reflector mapping `v` onto a multiple of `e_0`.
    fn annihilating(v: &[f64]) -> Self {
        let norm = dot(v, v).sqrt();
        let mut h = v.to_vec();
        let alpha = if v[0] >= 0.0 { norm } else { -norm };
        h[0] += alpha;
        let hh = dot(&h, &h);
        Self { h, beta: 2.0 / hh }
    }

    fn apply(&self, x: &mut [f64]) {
        let c = self.beta * dot(&self.h, x);
        x.iter_mut().zip(&self.h).for_each(|(v, h)| *v -= c * h);
    }

    /// `H A H` for symmetric `A`.
    fn conjugate(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        let n = a.nrows();
        let p: Vec<f64> = a
            .matvec(&self.h)?
            .into_iter()
            .map(|v| v * self.beta)
            .collect();
        let k = 0.5 * self.beta * dot(&self.h, &p);
        let q: Vec<f64> = p.iter().zip(&self.h).map(|(pi, hi)| pi - k * hi).collect();
        let mut out = a.clone();
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] -= self.h[i] * q[j] + q[i] * self.h[j];
            }
        }
        Ok(out)
    }
}

impl SpdFactor {
    pub fn new(a: &DenseMatrix, deflation: Option<Deflation>) -> Result<Self> {
        check_len(a.nrows(), a.ncols())?;
        let n = a.nrows();
        match deflation {
            None => Ok(Self {
                n,
                chol: a.cholesky()?,
                reflector: None,
                deflation: None,
            }),
            Some(defl) => {
                check_len(n, defl.w.len())?;
                let reflector = Reflector::annihilating(&defl.mw);
                let full = reflector.conjugate(a)?;
                let mut reduced = DenseMatrix::zeros(n - 1, n - 1);
                for i in 1..n {
                    for j in 1..n {
                        reduced[(i - 1, j - 1)] = full[(i, j)];
                    }
                }
                let chol = reduced.cholesky().map_err(|e| match e {
                    Error::Numerical(msg) => {
                        Error::Numerical(format!("{msg} (on the deflated complement)"))
                    }
                    other => other,
                })?;
                Ok(Self {
                    n,
                    chol,
                    reflector: Some(reflector),
                    deflation: Some(defl),
                })
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn deflation(&self) -> Option<&Deflation> {
        self.deflation.as_ref()
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, rhs.len())?;
        match &self.reflector {
            None => {
                let mut x = rhs.to_vec();
                forward_substitute(&self.chol, &mut x);
                backward_substitute_transposed(&self.chol, &mut x);
                Ok(x)
            }
            Some(refl) => {
                let defl = self.deflation.as_ref().unwrap();
                let mut y = defl.deflate_dual(rhs);
                refl.apply(&mut y);
                let mut tail = y[1..].to_vec();
                forward_substitute(&self.chol, &mut tail);
                backward_substitute_transposed(&self.chol, &mut tail);
                let mut t = Vec::with_capacity(self.n);
                t.push(0.0);
                t.extend_from_slice(&tail);
                refl.apply(&mut t);
                Ok(t)
            }
        }
    }
}

/// Dense SPD solve with optional deflation.
pub fn solve_spd_dense(
    a: &DenseMatrix,
    rhs: &[f64],
    deflation: Option<Deflation>,
) -> Result<Vec<f64>> {
    SpdFactor::new(a, deflation)?.solve(rhs)
}

/// Sparse SPD solve: dense factorization up to [`DENSE_SOLVE_LIMIT`]
/// unknowns, Jacobi-preconditioned CG beyond.
pub fn solve_spd(a: &CsrMatrix, rhs: &[f64], deflation: Option<Deflation>) -> Result<Vec<f64>> {
    check_len(a.nrows(), a.ncols())?;
    check_len(a.nrows(), rhs.len())?;
    if a.nrows() <= DENSE_SOLVE_LIMIT {
        solve_spd_dense(&a.to_dense(), rhs, deflation)
    } else {
        solve_spd_cg(a, rhs, deflation.as_ref(), CG_RTOL, 20 * a.nrows())
    }
}

/// Jacobi-preconditioned conjugate gradients on the deflated complement.
pub fn solve_spd_cg(
    a: &CsrMatrix,
    rhs: &[f64],
    deflation: Option<&Deflation>,
    rtol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = a.nrows();
    check_len(n, rhs.len())?;
    let diag = a.diagonal();
    if let Some((i, d)) = diag.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
        return Err(Error::Numerical(format!(
            "non-positive diagonal {d:e} at row {i}"
        )));
    }
    let project_dual = |v: Vec<f64>| match deflation {
        Some(d) => d.deflate_dual(&v),
        None => v,
    };
    let precondition = |r: &[f64]| {
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
        if let Some(d) = deflation {
            d.deflate_primal(&mut z);
        }
        z
    };

    let mut x = vec![0.0; n];
    let mut r = project_dual(rhs.to_vec());
    let r0 = dot(&r, &r).sqrt();
    if r0 == 0.0 {
        return Ok(x);
    }
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 0..max_iter {
        let ap = project_dual(a.spmv(&p)?);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Numerical(format!(
                "CG breakdown at iteration {it}: p^T A p = {pap:e} (operator not SPD)"
            )));
        }
        let alpha = rz / pap;
        x.iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
        r.iter_mut().zip(&ap).for_each(|(r, ap)| *r -= alpha * ap);
        if dot(&r, &r).sqrt() <= rtol * r0 {
            return Ok(x);
        }
        z = precondition(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
    }
    Err(Error::Numerical(format!(
        "CG did not reach relative residual {rtol:e} in {max_iter} iterations"
    )))
}
