use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use afem_eigen::afem::{problem_catalog, run_afem_observed, LevelView, ProblemSpec};
use afem_eigen::estimate::Marking;
use afem_eigen::output::{emit_outputs, indicators_to_csv, matrix_market};
use afem_eigen::Error;

#[derive(Parser)]
#[command(
    name = "afem-eigen",
    version,
    about = "Adaptive P1 eigensolver with a local multilevel Jacobi-Davidson solve step"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the adaptive loop on a catalog problem.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MarkingArg {
    Dorfler,
    Maximum,
    Uniform,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Emit {
    Csv,
    Svg,
}

#[derive(clap::Args)]
struct RunArgs {
    /// square, lshape, crack or fourquadrant
    #[arg(long)]
    problem: String,
    /// Coefficient contrast of the fourquadrant problem.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, default_value_t = 0.8)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Outer iteration cap per level.
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, value_enum)]
    marking: Option<MarkingArg>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    max_dof: Option<usize>,
    #[arg(long)]
    max_levels: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "csv")]
    emit: Vec<Emit>,
    /// Write every level's mesh.
    #[arg(long)]
    dump_mesh: bool,
    /// Write every level's stiffness and mass matrices in MatrixMarket format.
    #[arg(long)]
    dump_ops: bool,
    /// Write every level's error indicators.
    #[arg(long)]
    dump_indicators: bool,
}

fn build_spec(args: &RunArgs) -> afem_eigen::Result<ProblemSpec> {
    let mut spec = problem_catalog(&args.problem, args.mu)?;
    spec.solver.gamma = args.gamma;
    spec.solver.tol = args.tol;
    if let Some(n) = args.max_iter {
        spec.solver.max_iter = n;
    }
    if let Some(m) = args.marking {
        spec.marking = match m {
            MarkingArg::Dorfler => Marking::Dorfler { theta: 0.5 },
            MarkingArg::Maximum => Marking::Maximum { theta: 0.5 },
            MarkingArg::Uniform => Marking::Uniform,
        };
    }
    if let Some(theta) = args.theta {
        spec.marking = spec.marking.with_theta(theta);
    }
    if let Some(n) = args.max_dof {
        spec.max_dof = n;
    }
    if let Some(n) = args.max_levels {
        spec.max_levels = n;
    }
    spec.validate()?;
    Ok(spec)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Setup(_) | Error::Misuse(_) => 2,
        Error::NonConvergence { .. } | Error::ShiftValidity { .. } | Error::Numerical(_) => 3,
        _ => 1,
    }
}

fn run(args: RunArgs) -> ExitCode {
    let spec = match build_spec(&args) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    if let Err(e) = fs::create_dir_all(&args.out) {
        eprintln!("error: cannot create {}: {e}", args.out.display());
        return ExitCode::from(1);
    }

    println!(
        "{:>5} {:>9} {:>4} {:>12} {:>14} {:>12} {:>10}",
        "level", "dof", "it", "stop", "lambda", "eta", "ms"
    );
    let out = args.out.clone();
    let mut observer = |view: &LevelView| -> afem_eigen::Result<()> {
        let r = view.record;
        println!(
            "{:>5} {:>9} {:>4} {:>12.3e} {:>14.9} {:>12.4e} {:>10.1}",
            r.level, r.dof, r.iterations, r.stop, r.lambda, r.eta, r.solve_ms
        );
        if args.dump_mesh {
            fs::write(
                out.join(format!("mesh_{:03}.txt", r.level)),
                view.mesh.dump(),
            )?;
        }
        if args.dump_ops {
            let ops = &view.hierarchy.finest().ops;
            fs::write(
                out.join(format!("stiffness_{:03}.mtx", r.level)),
                matrix_market(&ops.stiffness),
            )?;
            fs::write(
                out.join(format!("mass_{:03}.mtx", r.level)),
                matrix_market(&ops.mass),
            )?;
        }
        if args.dump_indicators {
            fs::write(
                out.join(format!("indicators_{:03}.csv", r.level)),
                indicators_to_csv(view.indicators),
            )?;
        }
        Ok(())
    };

    let (records, failure) = match run_afem_observed(&spec, &mut observer) {
        Ok(run) => (run.records, None),
        Err(f) => (f.partial.records, Some(f.error)),
    };
    if !records.is_empty() {
        let csv = args.emit.contains(&Emit::Csv);
        let svg = args.emit.contains(&Emit::Svg);
        if let Err(e) = emit_outputs(&records, &args.out, csv, svg) {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match failure {
        None => ExitCode::SUCCESS,
        Some(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => run(args),
    }
}
