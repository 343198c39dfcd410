//! Sparse and small dense linear algebra.

mod csr;
mod dense;
mod solve;

pub use csr::CsrMatrix;
pub use dense::{
    backward_substitute_transposed, dense_geneig, dot, fix_sign, forward_substitute,
    symmetric_eigen, DenseMatrix, DenseSym, GenEig,
};
pub use solve::{
    solve_spd, solve_spd_cg, solve_spd_dense, Deflation, SpdFactor, DENSE_SOLVE_LIMIT,
};

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}
