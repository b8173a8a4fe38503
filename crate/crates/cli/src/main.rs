use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, ValueEnum};
use rayon::prelude::*;

use edgmg::experiment::{run_eoc_study, run_iteration_study};
use edgmg::{ExperimentConfig, OutputFormat, PenaltyKind, PenaltyLaw, ResultTable, RhsCase, SmootherConfig};

/// Overrides the number of worker threads used for independent
/// configurations.
const WORKERS_ENV: &str = "EDGMG_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Tau {
    #[value(name = "inv_h")]
    InvH,
    Const,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Smoother {
    Gs,
    /// Forward plus backward sweep per step.
    Sgs,
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Rhs {
    One,
    Sine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Study {
    Iters,
    Eoc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Md,
}

/// EDG discretization of the Poisson problem solved by homogeneous
/// multigrid: iteration-count and convergence-order studies.
#[derive(Debug, Parser)]
#[command(name = "edgmg", version)]
struct Args {
    /// Polynomial degree(s); comma separated for several configurations.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    degree: Vec<usize>,
    /// Number of refinements of the coarse mesh.
    #[arg(long, default_value_t = 6)]
    levels: usize,
    /// Penalty law(s): `inv_h` for c/h, `const` for c.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "inv_h")]
    tau: Vec<Tau>,
    #[arg(long, default_value_t = 1.0)]
    tau_coeff: f64,
    #[arg(long, value_enum, default_value = "gs")]
    smoother: Smoother,
    /// Jacobi damping factor.
    #[arg(long, default_value_t = 0.8)]
    damping: f64,
    /// Pre- and post-smoothing steps; comma separated for several.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    steps: Vec<usize>,
    /// Right-hand side; defaults to `sine` for the convergence study.
    #[arg(long, value_enum)]
    rhs: Option<Rhs>,
    /// Relative residual tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, value_enum, default_value = "iters")]
    study: Study,
    /// Coarse mesh file; defaults to the built-in unit-square mesh.
    #[arg(long)]
    mesh: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Output file; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Verbose logging (-v info, -vv debug with residual histories).
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn configs(args: &Args) -> Vec<ExperimentConfig> {
    let rhs = match (args.rhs, args.study) {
        (Some(Rhs::One), _) | (None, Study::Iters) => RhsCase::ConstantOne,
        (Some(Rhs::Sine), _) | (None, Study::Eoc) => RhsCase::ManufacturedSine,
    };
    let mut out = Vec::new();
    for &degree in &args.degree {
        for &tau in &args.tau {
            for &steps in &args.steps {
                let penalty = PenaltyLaw {
                    kind: match tau {
                        Tau::InvH => PenaltyKind::InvH,
                        Tau::Const => PenaltyKind::Const,
                    },
                    coeff: args.tau_coeff,
                };
                let smoother = match args.smoother {
                    Smoother::Gs => SmootherConfig::gauss_seidel(steps),
                    Smoother::Sgs => SmootherConfig::symmetric_gauss_seidel(steps),
                    Smoother::Jacobi => SmootherConfig::jacobi(steps, args.damping),
                };
                out.push(ExperimentConfig {
                    degree,
                    levels: args.levels,
                    penalty,
                    smoother,
                    rhs,
                    tol: args.tol,
                    mesh: args.mesh.clone(),
                });
            }
        }
    }
    out
}

fn run(args: &Args) -> anyhow::Result<bool> {
    let configs = configs(args);
    for c in &configs {
        c.validate().with_context(|| format!("configuration {c:?}"))?;
    }
    let study = args.study;
    let tables = configs
        .par_iter()
        .map(|c| {
            log::info!("running p={} tau={:?} m={}", c.degree, c.penalty, c.smoother.steps);
            let table = match study {
                Study::Iters => run_iteration_study(c),
                Study::Eoc => run_eoc_study(c),
            }?;
            for r in &table.rows {
                log::debug!(
                    "p={} tau={:?} m={} level {}: {} iterations in {:.3?}",
                    r.degree,
                    r.tau,
                    r.steps,
                    r.level,
                    r.iterations,
                    r.wall_time
                );
            }
            Ok::<_, edgmg::Error>(table)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut table = ResultTable::default();
    for t in tables {
        table.extend(t);
    }
    let format = match args.format {
        Format::Csv => OutputFormat::Csv,
        Format::Md => OutputFormat::Markdown,
    };
    table.emit(format, args.out.as_deref())?;
    for r in table.rows.iter().filter(|r| !r.converged) {
        log::warn!("p={} tau={:?} m={} level {} did not converge", r.degree, r.tau, r.steps, r.level);
    }
    Ok(table.all_converged())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = match args.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Ok(n) = std::env::var(WORKERS_ENV) {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("cannot set worker count: {e}");
                }
            }
            _ => log::warn!("ignoring {WORKERS_ENV}={n}: expected a positive integer"),
        }
    }
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
