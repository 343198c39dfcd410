//! The adaptive loop SOLVE -> ESTIMATE -> MARK -> REFINE and the problem
//! catalog.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::estimate::{
    estimate_robust, estimate_standard, mark, Indicators, Marking, SingularNodes,
};
use crate::fem::CoefficientField;
use crate::hierarchy::Hierarchy;
use crate::jd::{coarse_setup, jd_solve, CoarseData, JdStats, SolverConfig};
use crate::mesh::{make_initial_mesh, region, CellPattern, DomainKind, DomainSpec, Mesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    /// Element residual estimator, `rho = 1` only.
    Standard,
    /// Edge estimator weighted by the coefficient contrast.
    Robust,
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub domain: DomainSpec,
    pub rho: CoefficientField,
    /// Contrast parameter of the four-quadrant problem.
    pub mu: Option<f64>,
    pub estimator: EstimatorKind,
    pub singular: SingularNodes,
    pub marking: Marking,
    pub solver: SolverConfig,
    pub max_levels: usize,
    pub max_dof: usize,
}

pub const DEFAULT_MAX_DOF: usize = 500_000;
pub const DEFAULT_MAX_LEVELS: usize = 200;

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        self.marking.validate()?;
        if let Some(mu) = self.mu {
            if !(mu >= 1.0) || !mu.is_finite() {
                return Err(Error::Config(format!("mu = {mu} must be finite and >= 1")));
            }
        }
        if self.max_levels == 0 {
            return Err(Error::Config("max_levels must be positive".into()));
        }
        if self.estimator == EstimatorKind::Standard && !self.rho.is_unit() {
            return Err(Error::Config("the standard estimator needs rho = 1".into()));
        }
        Ok(())
    }
}

/// Catalog problems: `square`, `lshape`, `crack` (all `rho = 1`) and
/// `fourquadrant` with `rho = mu` on the upper-right and lower-left quadrants.
pub fn problem_catalog(name: &str, mu: Option<f64>) -> Result<ProblemSpec> {
    let kind: DomainKind = name.parse()?;
    let (cells_per_unit, marking) = match kind {
        DomainKind::UnitSquare => (8, Marking::Uniform),
        DomainKind::LShape | DomainKind::Crack => (4, Marking::Dorfler { theta: 0.5 }),
        DomainKind::FourQuadrant => (4, Marking::Maximum { theta: 0.5 }),
    };
    let (rho, estimator, singular, mu) = match kind {
        DomainKind::FourQuadrant => {
            let mu = mu.unwrap_or(1e4);
            if !(mu >= 1.0) || !mu.is_finite() {
                return Err(Error::Config(format!("mu = {mu} must be finite and >= 1")));
            }
            let rho = CoefficientField::from_regions([
                (region::Q1, 1.0),
                (region::Q2, mu),
                (region::Q3, mu),
                (region::Q4, 1.0),
            ])?;
            (
                rho,
                EstimatorKind::Robust,
                SingularNodes::Points(vec![[0.5, 0.5]]),
                Some(mu),
            )
        }
        _ => {
            if mu.is_some() {
                return Err(Error::Config(format!("problem {name:?} takes no mu")));
            }
            (
                CoefficientField::constant(1.0)?,
                EstimatorKind::Standard,
                SingularNodes::Detect,
                None,
            )
        }
    };
    Ok(ProblemSpec {
        name: name.to_string(),
        domain: DomainSpec {
            kind,
            cells_per_unit,
            pattern: match kind {
                DomainKind::UnitSquare => CellPattern::UnionJack,
                _ => CellPattern::Diagonal,
            },
        },
        rho,
        mu,
        estimator,
        singular,
        marking,
        solver: SolverConfig::default(),
        max_levels: DEFAULT_MAX_LEVELS,
        max_dof: DEFAULT_MAX_DOF,
    })
}

/// One row of the convergence history.
#[derive(Debug, Clone, PartialEq)]
pub struct AfemRecord {
    pub level: usize,
    pub dof: usize,
    pub iterations: usize,
    /// `|lambda^{j+1} - lambda^j|` at termination; zero for levels solved densely.
    pub stop: f64,
    pub lambda: f64,
    pub eta: f64,
    pub solve_ms: f64,
    pub cumulative_ms: f64,
}

/// What the observer sees after each level is solved and estimated.
pub struct LevelView<'a> {
    pub record: &'a AfemRecord,
    pub mesh: &'a Mesh,
    pub hierarchy: &'a Hierarchy,
    pub u: &'a [f64],
    pub indicators: &'a Indicators,
}

#[derive(Debug, Clone)]
pub struct AfemRun {
    pub records: Vec<AfemRecord>,
    /// Solver diagnostics per level; dense levels carry zero iterations.
    pub stats: Vec<JdStats>,
    pub coarse: Option<CoarseData>,
    /// Final eigenvector on the finest mesh.
    pub u: Vec<f64>,
    pub smoothing_total: usize,
}

/// A failed run with everything recorded before the failure.
#[derive(Debug)]
pub struct AfemFailure {
    pub error: Error,
    pub partial: AfemRun,
}

impl std::fmt::Display for AfemFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} (after {} levels)",
            self.error,
            self.partial.records.len()
        )
    }
}

impl std::error::Error for AfemFailure {}

pub fn run_afem(spec: &ProblemSpec) -> std::result::Result<AfemRun, AfemFailure> {
    run_afem_observed(spec, &mut |_| Ok(()))
}

/// Runs the adaptive loop, calling `observer` after every level.
pub fn run_afem_observed(
    spec: &ProblemSpec,
    observer: &mut dyn FnMut(&LevelView) -> Result<()>,
) -> std::result::Result<AfemRun, AfemFailure> {
    let mut run = AfemRun {
        records: Vec::new(),
        stats: Vec::new(),
        coarse: None,
        u: Vec::new(),
        smoothing_total: 0,
    };
    match drive(spec, &mut run, observer) {
        Ok(()) => Ok(run),
        Err(error) => Err(AfemFailure {
            error,
            partial: run,
        }),
    }
}

fn estimate(spec: &ProblemSpec, mesh: &Mesh, lambda: f64, u: &[f64]) -> Result<Indicators> {
    match spec.estimator {
        EstimatorKind::Standard => estimate_standard(mesh, &spec.rho, lambda, u),
        EstimatorKind::Robust => estimate_robust(mesh, &spec.rho, lambda, u, &spec.singular),
    }
}

fn dense_stats(lambda: f64, cd: &CoarseData) -> JdStats {
    JdStats {
        history: vec![lambda],
        initial_shift: cd.initial_shift,
        lambda_coarse: cd.lambda_coarse,
        ..Default::default()
    }
}

fn drive(
    spec: &ProblemSpec,
    run: &mut AfemRun,
    observer: &mut dyn FnMut(&LevelView) -> Result<()>,
) -> Result<()> {
    spec.validate()?;
    let coarse_mesh = make_initial_mesh(&spec.domain)?;
    if coarse_mesh.dof_count() >= spec.max_dof {
        return Err(Error::Config(format!(
            "max_dof = {} does not exceed the coarse dof count {}",
            spec.max_dof,
            coarse_mesh.dof_count()
        )));
    }
    let mut h = Hierarchy::new(coarse_mesh, spec.rho.clone())?;
    let mut cumulative = 0.0;

    let clock = Instant::now();
    let cd = coarse_setup(&h)?;
    let setup_ms = clock.elapsed().as_secs_f64() * 1e3;

    // level 0: coarse eigenpair; level 1: the uniformly refined coarse mesh
    // whose eigenvalue is the shift bound, so every later solve starts below it
    let mut lambda = cd.lambda_coarse;
    let mut u = cd.u_coarse.clone();
    for solve_ms in [setup_ms, 0.0] {
        if !run.records.is_empty() {
            h.push_level(cd.refined_mesh.clone())?;
            lambda = cd.initial_shift;
            u = cd.refined_vector.clone();
        }
        cumulative += solve_ms;
        let stats = dense_stats(lambda, &cd);
        finish_level(
            spec, &h, lambda, &u, 0, 0.0, solve_ms, cumulative, stats, run, observer,
        )?;
        if stop_here(spec, &h, run) {
            run.coarse = Some(cd);
            run.u = u;
            return Ok(());
        }
    }
    run.coarse = Some(cd.clone());

    loop {
        let indicators = estimate(spec, &h.finest().mesh, lambda, &u)?;
        let fine = match spec.marking {
            Marking::Uniform => h.finest().mesh.refine_uniform(),
            strategy => h.finest().mesh.nvb_refine(&mark(&indicators, strategy)?)?,
        };
        h.push_level(fine)?;
        let init = h.finest().prolongation.as_ref().unwrap().prolongate(&u)?;

        let clock = Instant::now();
        let outcome = match jd_solve(&h, &cd, &init, &spec.solver) {
            Ok(o) => o,
            Err(e) => {
                run.u = init;
                run.smoothing_total = h.smoothing_total();
                return Err(e);
            }
        };
        let solve_ms = clock.elapsed().as_secs_f64() * 1e3;
        cumulative += solve_ms;
        lambda = outcome.lambda;
        u = outcome.u;
        let (iterations, stop) = (outcome.stats.iterations, outcome.stats.stop);
        finish_level(
            spec,
            &h,
            lambda,
            &u,
            iterations,
            stop,
            solve_ms,
            cumulative,
            outcome.stats,
            run,
            observer,
        )?;
        if stop_here(spec, &h, run) {
            run.u = u;
            return Ok(());
        }
    }
}

fn stop_here(spec: &ProblemSpec, h: &Hierarchy, run: &mut AfemRun) -> bool {
    run.smoothing_total = h.smoothing_total();
    run.records.len() >= spec.max_levels || h.finest().dof_count() >= spec.max_dof
}

#[allow(clippy::too_many_arguments)]
fn finish_level(
    spec: &ProblemSpec,
    h: &Hierarchy,
    lambda: f64,
    u: &[f64],
    iterations: usize,
    stop: f64,
    solve_ms: f64,
    cumulative_ms: f64,
    stats: JdStats,
    run: &mut AfemRun,
    observer: &mut dyn FnMut(&LevelView) -> Result<()>,
) -> Result<()> {
    let mesh = &h.finest().mesh;
    let indicators = estimate(spec, mesh, lambda, u)?;
    let record = AfemRecord {
        level: h.finest_index(),
        dof: h.finest().dof_count(),
        iterations,
        stop,
        lambda,
        eta: indicators.total,
        solve_ms,
        cumulative_ms,
    };
    observer(&LevelView {
        record: &record,
        mesh,
        hierarchy: h,
        u,
        indicators: &indicators,
    })?;
    run.records.push(record);
    run.stats.push(stats);
    Ok(())
}
