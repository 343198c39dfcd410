use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("lineage error: {0}")]
    Lineage(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("misuse: {0}")]
    Misuse(String),

    #[error("coarse setup failed: {0}")]
    Setup(String),

    /// A shifted one-dimensional operator `a(phi,phi) - shift * b(phi,phi)` was not positive.
    #[error("invalid shift {shift} at level {level}, dof {dof}: shifted diagonal {value} <= 0 (coarse mesh too coarse for this shift)")]
    ShiftValidity {
        level: usize,
        dof: usize,
        shift: f64,
        value: f64,
    },

    #[error(
        "Jacobi-Davidson did not converge in {iterations} iterations (last |dlambda| = {stop:e})"
    )]
    NonConvergence {
        iterations: usize,
        stop: f64,
        history: Vec<f64>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { expected, got });
    }
    Ok(())
}
