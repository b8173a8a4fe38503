//! Iteration-count and convergence-order studies on nested mesh hierarchies,
//! and their tabular output.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::edg::{eoc, l2_errors, PenaltyKind, PenaltyLaw};
use crate::mesh::{build_figure1_coarse, Point2, TriMesh};
use crate::multigrid::{SmootherConfig, SmootherKind};
use crate::problem::EdgProblem;
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhsCase {
    /// `f ≡ 1`, no closed-form solution.
    ConstantOne,
    /// `f = 8π² sin(2πx) sin(2πy)` with `u = sin(2πx) sin(2πy)`.
    ManufacturedSine,
}

impl RhsCase {
    pub fn forcing(&self, x: Point2) -> f64 {
        match self {
            RhsCase::ConstantOne => 1.0,
            RhsCase::ManufacturedSine => 8.0 * PI * PI * sine_solution(x),
        }
    }
}

pub fn sine_solution(x: Point2) -> f64 {
    (2.0 * PI * x.x).sin() * (2.0 * PI * x.y).sin()
}

/// `q = -∇u` for [`sine_solution`].
pub fn sine_flux(x: Point2) -> [f64; 2] {
    let (sx, cx) = (2.0 * PI * x.x).sin_cos();
    let (sy, cy) = (2.0 * PI * x.y).sin_cos();
    [-2.0 * PI * cx * sy, -2.0 * PI * sx * cy]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Markdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub degree: usize,
    pub levels: usize,
    pub penalty: PenaltyLaw,
    pub smoother: SmootherConfig,
    pub rhs: RhsCase,
    pub tol: f64,
    pub mesh: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            degree: 1,
            levels: 6,
            penalty: PenaltyLaw::inv_h(),
            smoother: SmootherConfig::gauss_seidel(1),
            rhs: RhsCase::ConstantOne,
            tol: 1e-6,
            mesh: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(1..=3).contains(&self.degree) {
            return Err(Error::Config(format!("degree {} outside 1..=3", self.degree)));
        }
        if self.levels == 0 {
            return Err(Error::Config("at least one refinement level is required".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tolerance {} must be positive", self.tol)));
        }
        if !(self.penalty.coeff > 0.0) {
            return Err(Error::Config(format!(
                "penalty coefficient {} must be positive",
                self.penalty.coeff
            )));
        }
        if !(1..=2).contains(&self.smoother.steps) {
            return Err(Error::Config(format!(
                "smoothing steps {} outside 1..=2",
                self.smoother.steps
            )));
        }
        self.smoother.validate()?;
        Ok(())
    }

    fn coarse_mesh(&self) -> Result<TriMesh, Error> {
        match &self.mesh {
            Some(path) => Ok(TriMesh::read(path)?),
            None => Ok(build_figure1_coarse()),
        }
    }
}

/// One row per (configuration, level).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub degree: usize,
    pub tau: PenaltyKind,
    pub tau_coeff: f64,
    pub smoother: SmootherKind,
    pub steps: usize,
    pub level: usize,
    pub dofs: usize,
    pub iterations: usize,
    pub converged: bool,
    pub e_u: Option<f64>,
    pub e_q: Option<f64>,
    pub eoc_u: Option<f64>,
    pub eoc_q: Option<f64>,
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

const CSV_HEADER: [&str; 13] = [
    "degree",
    "tau",
    "tau_coeff",
    "smoother",
    "steps",
    "level",
    "dofs",
    "iterations",
    "converged",
    "e_u",
    "e_q",
    "eoc_u",
    "eoc_q",
];

impl ResultTable {
    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged)
    }

    pub fn extend(&mut self, other: ResultTable) {
        self.rows.extend(other.rows);
    }

    pub fn to_csv(&self) -> Result<String, Error> {
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        writer.write_record(CSV_HEADER)?;
        for row in &self.rows {
            writer.serialize(row)?;
        }
        let bytes = writer.into_inner().map_err(|e| Error::Output {
            path: "<memory>".into(),
            source: e.into_error(),
        })?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(reader: impl Read) -> Result<Self, Error> {
        let mut reader = csv::Reader::from_reader(reader);
        let rows = reader.deserialize().collect::<Result<Vec<ResultRow>, _>>()?;
        Ok(Self { rows })
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str("| p | tau | smoother | m | level | dofs | iterations | e_u | e_q | EOC u | EOC q |\n");
        out.push_str("|---|---|---|---|---|---|---|---|---|---|---|\n");
        let opt = |v: Option<f64>, prec: usize, sci: bool| match v {
            Some(x) if sci => format!("{x:.prec$e}"),
            Some(x) => format!("{x:.prec$}"),
            None => String::new(),
        };
        for r in &self.rows {
            let tau = match r.tau {
                PenaltyKind::InvH if r.tau_coeff == 1.0 => "1/h".to_string(),
                PenaltyKind::InvH => format!("{}/h", r.tau_coeff),
                PenaltyKind::Const => format!("{}", r.tau_coeff),
            };
            let smoother = match r.smoother {
                SmootherKind::GaussSeidel => "gs",
                SmootherKind::SymmetricGaussSeidel => "sgs",
                SmootherKind::Jacobi => "jacobi",
            };
            let iterations = if r.converged {
                r.iterations.to_string()
            } else {
                format!("{} (not converged)", r.iterations)
            };
            writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                r.degree,
                tau,
                smoother,
                r.steps,
                r.level,
                r.dofs,
                iterations,
                opt(r.e_u, 3, true),
                opt(r.e_q, 3, true),
                opt(r.eoc_u, 2, false),
                opt(r.eoc_q, 2, false),
            )
            .unwrap();
        }
        out
    }

    pub fn render(&self, format: OutputFormat) -> Result<String, Error> {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Markdown => Ok(self.to_markdown()),
        }
    }

    /// Writes the rendered table to `path`, or to stdout when `path` is
    /// `None`.
    pub fn emit(&self, format: OutputFormat, path: Option<&Path>) -> Result<(), Error> {
        let text = self.render(format)?;
        match path {
            Some(p) => std::fs::write(p, text).map_err(|source| Error::Output {
                path: p.display().to_string(),
                source,
            }),
            None => std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|source| Error::Output {
                    path: "<stdout>".into(),
                    source,
                }),
        }
    }
}

struct StudyRun {
    problem: EdgProblem,
    solutions: Vec<(Vec<f64>, crate::multigrid::SolveReport)>,
}

fn run_nested(config: &ExperimentConfig) -> Result<StudyRun, Error> {
    config.validate()?;
    let rhs = config.rhs;
    let forcing = move |x: Point2| rhs.forcing(x);
    let problem = EdgProblem::build(
        config.coarse_mesh()?,
        config.levels,
        config.degree,
        config.penalty,
        config.smoother,
        &forcing,
    )?;
    let solutions = problem.mg.nested_solve(&problem.loads(), config.tol)?;
    Ok(StudyRun { problem, solutions })
}

fn base_row(config: &ExperimentConfig, level: usize, dofs: usize, report: &crate::multigrid::SolveReport) -> ResultRow {
    ResultRow {
        degree: config.degree,
        tau: config.penalty.kind,
        tau_coeff: config.penalty.coeff,
        smoother: config.smoother.kind,
        steps: config.smoother.steps,
        level,
        dofs,
        iterations: report.iterations,
        converged: report.converged,
        e_u: None,
        e_q: None,
        eoc_u: None,
        eoc_q: None,
        wall_time: report.wall_time,
    }
}

/// Nested-iteration solve on every level; one row per level `1..=L` with the
/// number of outer multigrid iterations.
pub fn run_iteration_study(config: &ExperimentConfig) -> Result<ResultTable, Error> {
    let run = run_nested(config)?;
    let rows = (1..=config.levels)
        .map(|l| base_row(config, l, run.problem.levels[l].n_dofs(), &run.solutions[l].1))
        .collect();
    Ok(ResultTable { rows })
}

/// Nested-iteration solve of the manufactured problem; rows for levels
/// `0..=L` with `L²` errors of `u` and `q`, and EOCs from level 1 on.
pub fn run_eoc_study(config: &ExperimentConfig) -> Result<ResultTable, Error> {
    if config.rhs != RhsCase::ManufacturedSine {
        return Err(Error::Config("the convergence study needs the manufactured right-hand side".into()));
    }
    let run = run_nested(config)?;
    let rhs = config.rhs;
    let forcing = move |x: Point2| rhs.forcing(x);
    let mut rows: Vec<ResultRow> = Vec::with_capacity(config.levels + 1);
    for l in 0..=config.levels {
        let level = &run.problem.levels[l];
        let mesh = run.problem.hierarchy.level(l);
        let (lambda, report) = &run.solutions[l];
        let sol = level.reconstruct(mesh, &run.problem.reference, lambda, &forcing)?;
        let (e_u, e_q) = l2_errors(&sol, mesh, &run.problem.reference, &sine_solution, &sine_flux);
        let mut row = base_row(config, l, level.n_dofs(), report);
        row.e_u = Some(e_u);
        row.e_q = Some(e_q);
        if let Some(prev) = rows.last() {
            row.eoc_u = Some(eoc(prev.e_u.expect("set"), e_u));
            row.eoc_q = Some(eoc(prev.e_q.expect("set"), e_q));
        }
        rows.push(row);
    }
    Ok(ResultTable { rows })
}
