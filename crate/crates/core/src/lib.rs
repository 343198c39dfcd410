//! Adaptive P1 finite elements for the principal eigenpair of
//! `-div(rho grad u) = lambda u` with homogeneous Dirichlet data, solved on
//! each adaptive level by Jacobi-Davidson with a local multilevel
//! preconditioner.

pub mod afem;
pub mod error;
pub mod estimate;
pub mod fem;
pub mod hierarchy;
pub mod jd;
pub mod linalg;
pub mod mesh;
pub mod output;

pub use error::{Error, Result};
