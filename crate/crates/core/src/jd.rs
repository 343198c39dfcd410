//! Jacobi-Davidson iteration for the principal eigenpair with a local
//! multilevel preconditioner.
//!
//! All residuals are handled as dual vectors, i.e. the coefficients
//! `b(r, phi_i)` of a function `r` against the nodal basis. With that
//! convention the `b`-orthogonal projector onto a coarser space is the
//! transposed prolongation chain, and the shifted one-dimensional solve
//! `(A_{l,i} - lambda I)^{-1} Q_{l,i}` on a basis function reduces to a
//! division by `a(phi,phi) - lambda b(phi,phi)`.

use crate::error::{check_len, Error, Result};
use crate::fem::{assemble, rayleigh_quotient, OperatorPair};
use crate::hierarchy::{Hierarchy, Level};
use crate::linalg::{axpy, dense_geneig, dot, Deflation, DenseMatrix, SpdFactor};
use crate::mesh::Mesh;

/// How many extra uniform refinements of the coarse mesh are tried when the
/// once-refined eigenvalue is not below the coarse one.
const MAX_SHIFT_REFINEMENTS: usize = 3;

/// Relative slack for comparisons that hold exactly in exact arithmetic.
const ROUNDOFF: f64 = 1e-12;

/// Bound on the rounding error of `u^T A u / u^T M u`, proportional to
/// `|u|^T |A| |u|`, which dominates the Rayleigh quotient under high contrast.
fn rayleigh_roundoff(ops: &OperatorPair, u: &[f64]) -> f64 {
    let mut abs_energy = 0.0;
    let mut mass = 0.0;
    for (i, ui) in u.iter().enumerate() {
        abs_energy += ui.abs()
            * ops
                .stiffness
                .row(i)
                .map(|(j, a)| (a * u[j]).abs())
                .sum::<f64>();
        mass += ui * ops.mass.row_dot(i, u);
    }
    64.0 * f64::EPSILON * abs_energy / mass
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Scaling of the local Jacobi smoother, in `(0, 1)`.
    pub gamma: f64,
    /// Stop when `|lambda_{j+1} - lambda_j| < tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Search-space size that triggers a restart from the current Ritz vector.
    pub max_basis: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gamma: 0.8,
            tol: 1e-10,
            max_iter: 100,
            max_basis: 30,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!(
                "gamma = {} must lie in (0, 1)",
                self.gamma
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!(
                "tol = {} must be positive",
                self.tol
            )));
        }
        if self.max_iter == 0 || self.max_basis < 2 {
            return Err(Error::Config(
                "max_iter must be >= 1 and max_basis >= 2".into(),
            ));
        }
        Ok(())
    }
}

/// Coarse eigenpair and the initial shift bound.
#[derive(Debug, Clone)]
pub struct CoarseData {
    /// `lambda_{1,0}`.
    pub lambda_coarse: f64,
    /// `u_{1,0}` with unit mass norm.
    pub u_coarse: Vec<f64>,
    /// `lambda_{2,0}`, infinite when level 0 has a single dof.
    pub lambda_coarse_second: f64,
    /// `lambda^0`: the principal eigenvalue on the uniformly refined coarse mesh.
    pub initial_shift: f64,
    /// The uniformly refined coarse mesh.
    pub refined_mesh: Mesh,
    /// Principal eigenvector on `refined_mesh`, unit mass norm.
    pub refined_vector: Vec<f64>,
    /// Number of uniform refinements used for `refined_mesh`.
    pub refinements: usize,
    stiffness: DenseMatrix,
    mass: DenseMatrix,
    deflation: Deflation,
}

impl CoarseData {
    /// Deflated factorization of `A_0 - shift M_0`.
    pub fn shifted_factor(&self, shift: f64) -> Result<SpdFactor> {
        let shifted = self.stiffness.add_scaled(-shift, &self.mass)?;
        SpdFactor::new(&shifted, Some(self.deflation.clone()))
    }

    pub fn coarse_stiffness(&self) -> &DenseMatrix {
        &self.stiffness
    }

    pub fn coarse_mass(&self) -> &DenseMatrix {
        &self.mass
    }
}

/// Solves the coarse eigenproblem and fixes the shift bound `lambda^0` from a
/// uniformly refined copy of the coarse mesh.
pub fn coarse_setup(h: &Hierarchy) -> Result<CoarseData> {
    let level0 = h.level(0)?;
    if level0.dof_count() == 0 {
        return Err(Error::Setup("coarse mesh has no interior vertices".into()));
    }
    let stiffness = level0.ops.stiffness.to_dense();
    let mass = level0.ops.mass.to_dense();
    let k = level0.dof_count().min(2);
    let eig = dense_geneig(&stiffness, &mass, k)?;
    let lambda_coarse = eig.values[0];
    let lambda_coarse_second = eig.values.get(1).copied().unwrap_or(f64::INFINITY);
    let u_coarse = eig.vectors[0].clone();

    let mut refined_mesh = level0.mesh.clone();
    for refinements in 1..=MAX_SHIFT_REFINEMENTS {
        refined_mesh = refined_mesh.refine_uniform();
        let ops = assemble(&refined_mesh, h.coefficient())?;
        let fine = dense_geneig(&ops.stiffness.to_dense(), &ops.mass.to_dense(), 1)?;
        // the quotient of the returned vector, so prolongated copies reproduce it
        let shift = rayleigh_quotient(&ops, &fine.vectors[0])?;
        if shift < lambda_coarse {
            let deflation = Deflation::with_dense_metric(&u_coarse, &mass)?;
            return Ok(CoarseData {
                lambda_coarse,
                u_coarse,
                lambda_coarse_second,
                initial_shift: shift,
                refined_mesh,
                refined_vector: fine.vectors[0].clone(),
                refinements,
                stiffness,
                mass,
                deflation,
            });
        }
    }
    Err(Error::Setup(format!(
        "refined eigenvalue never dropped below lambda_(1,0) = {lambda_coarse}; use a finer coarse mesh"
    )))
}

/// Shifted local Jacobi smoother on one level: zero off the smoothing set,
/// `gamma d_i / (a(phi_i,phi_i) - shift b(phi_i,phi_i))` on it.
pub fn smoother_apply(
    level: &Level,
    level_index: usize,
    shift: f64,
    gamma: f64,
    dual: &[f64],
) -> Result<Vec<f64>> {
    check_len(level.dof_count(), dual.len())?;
    let inv = shifted_inverse_diagonal(level, level_index, shift)?;
    let mut out = vec![0.0; dual.len()];
    for (&i, w) in level.smoothing_set.iter().zip(&inv) {
        out[i] = gamma * dual[i] * w;
    }
    Ok(out)
}

fn shifted_inverse_diagonal(level: &Level, level_index: usize, shift: f64) -> Result<Vec<f64>> {
    level
        .smoothing_set
        .iter()
        .map(|&i| {
            let value = level.diag_stiffness[i] - shift * level.diag_mass[i];
            if value > 0.0 {
                Ok(1.0 / value)
            } else {
                Err(Error::ShiftValidity {
                    level: level_index,
                    dof: i,
                    shift,
                    value,
                })
            }
        })
        .collect()
}

/// Coarse correction: deflates `d0` against `u_{1,0}` and solves with
/// `A_0 - shift M_0` on the `M_0`-orthogonal complement of `u_{1,0}`.
pub fn coarse_correction(cd: &CoarseData, shift: f64, d0: &[f64]) -> Result<Vec<f64>> {
    cd.shifted_factor(shift)?.solve(d0)
}

/// `B_L` for one fixed shift: coarse correction followed by one shifted
/// local Jacobi sweep per level, coarse to fine.
#[derive(Debug)]
pub struct Preconditioner<'a> {
    hierarchy: &'a Hierarchy,
    shift: f64,
    gamma: f64,
    coarse: SpdFactor,
    inv_diag: Vec<Vec<f64>>,
}

impl<'a> Preconditioner<'a> {
    pub fn new(hierarchy: &'a Hierarchy, cd: &CoarseData, shift: f64, gamma: f64) -> Result<Self> {
        let coarse = cd.shifted_factor(shift)?;
        let inv_diag = hierarchy
            .levels()
            .iter()
            .enumerate()
            .map(|(l, level)| {
                if l == 0 {
                    Ok(Vec::new())
                } else {
                    shifted_inverse_diagonal(level, l, shift)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            hierarchy,
            shift,
            gamma,
            coarse,
            inv_diag,
        })
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Maps a finest-level dual vector to a finest-level correction.
    pub fn apply(&self, dual: &[f64]) -> Result<Vec<f64>> {
        let duals = self.hierarchy.restrict_all(dual)?;
        let mut c = self.coarse.solve(&duals[0])?;
        for (l, level) in self.hierarchy.levels().iter().enumerate().skip(1) {
            c = level.prolongation.as_ref().unwrap().prolongate(&c)?;
            // the accumulated correction lives in V_l, so the level-l residual
            // is the restricted dual minus the level-l shifted operator on it
            let residual: Vec<f64> = level
                .smoothing_set
                .iter()
                .map(|&i| duals[l][i] - level.ops.shifted_row_dot(i, self.shift, &c))
                .collect();
            for ((&i, r), w) in level
                .smoothing_set
                .iter()
                .zip(&residual)
                .zip(&self.inv_diag[l])
            {
                c[i] += self.gamma * r * w;
            }
        }
        Ok(c)
    }
}

/// Convenience wrapper building a [`Preconditioner`] for one application.
pub fn precondition(
    h: &Hierarchy,
    cd: &CoarseData,
    shift: f64,
    gamma: f64,
    dual: &[f64],
) -> Result<Vec<f64>> {
    Preconditioner::new(h, cd, shift, gamma)?.apply(dual)
}

/// Search space and current Ritz pair of the outer iteration.
#[derive(Debug, Clone)]
pub struct JdState {
    pub lambda: f64,
    /// Current iterate, unit mass norm.
    pub u: Vec<f64>,
    au: Vec<f64>,
    mu: Vec<f64>,
    basis: Vec<Vec<f64>>,
    a_basis: Vec<Vec<f64>>,
    m_basis: Vec<Vec<f64>>,
    /// `W^T A W`, row-major by basis index.
    projected: Vec<Vec<f64>>,
    pub history: Vec<f64>,
    pub restarts: usize,
}

impl JdState {
    pub fn new(ops: &OperatorPair, u: &[f64]) -> Result<Self> {
        check_len(ops.dof_count(), u.len())?;
        let mut u = u.to_vec();
        let mut mu = ops.mass.spmv(&u)?;
        let norm = dot(&u, &mu).sqrt();
        if norm == 0.0 {
            return Err(Error::Domain("initial iterate is zero".into()));
        }
        u.iter_mut().for_each(|v| *v /= norm);
        mu.iter_mut().for_each(|v| *v /= norm);
        let au = ops.stiffness.spmv(&u)?;
        let lambda = dot(&u, &au);
        Ok(Self {
            lambda,
            basis: vec![u.clone()],
            a_basis: vec![au.clone()],
            m_basis: vec![mu.clone()],
            projected: vec![vec![lambda]],
            u,
            au,
            mu,
            history: vec![lambda],
            restarts: 0,
        })
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    /// `lambda M u - A u`.
    pub fn dual_residual(&self) -> Vec<f64> {
        self.mu
            .iter()
            .zip(&self.au)
            .map(|(m, a)| self.lambda * m - a)
            .collect()
    }

    /// `M u` of the current iterate.
    pub fn mass_u(&self) -> &[f64] {
        &self.mu
    }

    /// `t - b(t, u) u`.
    pub fn project_out_iterate(&self, t: &mut [f64]) {
        let c = dot(&self.mu, t);
        axpy(-c, &self.u, t);
    }

    /// Extends the basis by `t` and moves to the smallest Ritz pair. Returns
    /// whether the basis grew.
    pub fn ritz_step(&mut self, ops: &OperatorPair, t: &[f64], max_basis: usize) -> Result<bool> {
        check_len(ops.dof_count(), t.len())?;
        let mut t = t.to_vec();
        let mt = ops.mass.spmv(&t)?;
        let original = dot(&t, &mt).sqrt();
        if original == 0.0 || !original.is_finite() {
            self.history.push(self.lambda);
            return Ok(false);
        }
        if self.basis.len() >= max_basis {
            self.restart();
        }
        for _pass in 0..2 {
            for (w, mw) in self.basis.iter().zip(&self.m_basis) {
                let c = dot(mw, &t);
                axpy(-c, w, &mut t);
            }
        }
        let mut mt = ops.mass.spmv(&t)?;
        let norm = dot(&t, &mt).sqrt();
        if !(norm > 1e-12 * original) {
            self.history.push(self.lambda);
            return Ok(false);
        }
        t.iter_mut().for_each(|v| *v /= norm);
        mt.iter_mut().for_each(|v| *v /= norm);
        let at = ops.stiffness.spmv(&t)?;

        let mut column: Vec<f64> = self.basis.iter().map(|w| dot(w, &at)).collect();
        column.push(dot(&t, &at));
        for (row, &c) in self.projected.iter_mut().zip(&column) {
            row.push(c);
        }
        self.projected.push(column);
        self.basis.push(t);
        self.a_basis.push(at);
        self.m_basis.push(mt);

        let k = self.basis.len();
        let mut h = DenseMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                h[(i, j)] = 0.5 * (self.projected[i][j] + self.projected[j][i]);
            }
        }
        let ritz = dense_geneig(&h, &DenseMatrix::identity(k), 1)?;
        let theta = ritz.values[0];
        if theta <= self.lambda {
            let x = &ritz.vectors[0];
            let n = self.u.len();
            let (mut u, mut au, mut mu) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
            for i in 0..k {
                axpy(x[i], &self.basis[i], &mut u);
                axpy(x[i], &self.a_basis[i], &mut au);
                axpy(x[i], &self.m_basis[i], &mut mu);
            }
            let norm = dot(&u, &mu).sqrt();
            let s = sign_of_largest(&u) / norm;
            u.iter_mut().for_each(|v| *v *= s);
            au.iter_mut().for_each(|v| *v *= s);
            mu.iter_mut().for_each(|v| *v *= s);
            self.u = u;
            self.au = au;
            self.mu = mu;
            self.lambda = theta;
        }
        // theta > lambda only by round-off: keep the previous pair
        self.history.push(self.lambda);
        Ok(true)
    }

    fn restart(&mut self) {
        self.basis = vec![self.u.clone()];
        self.a_basis = vec![self.au.clone()];
        self.m_basis = vec![self.mu.clone()];
        self.projected = vec![vec![self.lambda]];
        self.restarts += 1;
    }

    /// `max |W^T M W - I|`.
    pub fn gram_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, w) in self.basis.iter().enumerate() {
            for (j, mw) in self.m_basis.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(w, mw) - target).abs());
            }
        }
        worst
    }
}

/// `1` if the largest-magnitude entry (first on ties) is non-negative, else `-1`.
fn sign_of_largest(v: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for &x in v {
        if x.abs() > best.abs() {
            best = x;
        }
    }
    if best < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Per-solve diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JdStats {
    /// Outer iterations (preconditioner applications).
    pub iterations: usize,
    /// `|lambda_{j+1} - lambda_j|` at termination.
    pub stop: f64,
    /// `lambda^0, lambda^1, ...`.
    pub history: Vec<f64>,
    /// Largest `|b(t, u^j)| / (|t|_0 |u^j|_0)` after projection.
    pub max_deflation_defect: f64,
    /// Largest `max |W^T M W - I|` seen.
    pub max_gram_defect: f64,
    pub restarts: usize,
    /// The shift bound `lambda^0` in force.
    pub initial_shift: f64,
    /// `lambda_{1,0}`.
    pub lambda_coarse: f64,
    /// Rounding allowance on the initial Rayleigh quotient.
    pub shift_slack: f64,
}

impl JdStats {
    /// Ritz values never increase.
    pub fn is_monotone(&self) -> bool {
        self.history.windows(2).all(|w| w[1] <= w[0])
    }

    /// `lambda_final <= lambda^j <= lambda^0 < lambda_{1,0}` for every recorded value.
    pub fn shift_ordering_holds(&self, lambda_final: f64) -> bool {
        let upper = self.initial_shift * (1.0 + ROUNDOFF) + self.shift_slack;
        self.initial_shift < self.lambda_coarse
            && self
                .history
                .iter()
                .all(|&l| l >= lambda_final && l <= upper)
    }
}

#[derive(Debug, Clone)]
pub struct JdOutcome {
    pub lambda: f64,
    pub u: Vec<f64>,
    pub stats: JdStats,
}

/// Runs the outer iteration on the finest level of `h`, starting from an
/// iterate prolongated from the previous level.
pub fn jd_solve(
    h: &Hierarchy,
    cd: &CoarseData,
    init_u: &[f64],
    cfg: &SolverConfig,
) -> Result<JdOutcome> {
    cfg.validate()?;
    let ops = &h.finest().ops;
    let mut state = JdState::new(ops, init_u)?;
    let shift_slack = rayleigh_roundoff(ops, &state.u);
    if state.lambda > cd.initial_shift * (1.0 + ROUNDOFF) + shift_slack {
        return Err(Error::Setup(format!(
            "initial Rayleigh quotient {} exceeds the shift bound {}",
            state.lambda, cd.initial_shift
        )));
    }
    let mut stats = JdStats {
        initial_shift: cd.initial_shift,
        lambda_coarse: cd.lambda_coarse,
        shift_slack,
        ..Default::default()
    };
    for j in 0..cfg.max_iter {
        let dual = state.dual_residual();
        let pre = Preconditioner::new(h, cd, state.lambda, cfg.gamma)?;
        let mut t = pre.apply(&dual)?;
        state.project_out_iterate(&mut t);

        let mt = ops.mass.spmv(&t)?;
        let tnorm = dot(&t, &mt).sqrt();
        if tnorm > 0.0 {
            let defect = dot(&mt, &state.u).abs() / tnorm;
            stats.max_deflation_defect = stats.max_deflation_defect.max(defect);
        }

        let previous = state.lambda;
        state.ritz_step(ops, &t, cfg.max_basis)?;
        stats.max_gram_defect = stats.max_gram_defect.max(state.gram_defect());
        stats.iterations = j + 1;
        stats.stop = (state.lambda - previous).abs();
        if stats.stop < cfg.tol {
            stats.history = state.history.clone();
            stats.restarts = state.restarts;
            return Ok(JdOutcome {
                lambda: state.lambda,
                u: state.u,
                stats,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iter,
        stop: stats.stop,
        history: state.history,
    })
}
