//! Convergence-study driver shared by the command-line tool and the test
//! harness: run one solve per refinement level, record errors and timings,
//! and fit rates on the finest levels.

use std::str::FromStr;
use std::time::Instant;

use crate::discretization::Discretization;
use crate::error::{Error, Result};
use crate::geometry::loglog_slope;
use crate::mesh::{MeshFamily, MeshFamilySpec, PolytopalMesh};
use crate::operators::OperatorConfig;
use crate::scheme::{measure_errors, newton_solve, NewtonOptions, ProblemSpec, TestCase};
use crate::space::{GlobalDofVector, SpaceSpec};
use crate::stabilization::StabKind;

/// Element degree choice relative to the face degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LOffset {
    Minus,
    Same,
    Plus,
}

impl LOffset {
    pub fn elem_degree(&self, k: i32) -> i32 {
        match self {
            LOffset::Minus => k - 1,
            LOffset::Same => k,
            LOffset::Plus => k + 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LOffset::Minus => "minus",
            LOffset::Same => "same",
            LOffset::Plus => "plus",
        }
    }
}

impl FromStr for LOffset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minus" => Ok(LOffset::Minus),
            "same" => Ok(LOffset::Same),
            "plus" => Ok(LOffset::Plus),
            other => Err(Error::Spec(format!("unknown l-offset '{other}'"))),
        }
    }
}

/// One row of a convergence study.
#[derive(Debug, Clone)]
pub struct ConvergenceRecord {
    pub family: String,
    pub k: i32,
    pub l: i32,
    pub p: f64,
    pub stab: StabKind,
    pub h: f64,
    pub n_dofs_total: usize,
    pub n_dofs_condensed: usize,
    pub err_grad: f64,
    pub err_pot: f64,
    pub newton_iters: usize,
    pub wall_ms: f64,
}

impl ConvergenceRecord {
    pub const CSV_HEADER: &'static str =
        "family,k,l,p,stab,h,n_dofs_total,n_dofs_condensed,err_grad,err_pot,newton_iters,wall_ms";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6e},{},{},{:.6e},{:.6e},{},{:.3}",
            self.family,
            self.k,
            self.l,
            self.p,
            self.stab,
            self.h,
            self.n_dofs_total,
            self.n_dofs_condensed,
            self.err_grad,
            self.err_pot,
            self.newton_iters,
            self.wall_ms
        )
    }
}

/// Configuration of one solve.
#[derive(Clone)]
pub struct RunSettings {
    pub k: i32,
    pub l: i32,
    pub p: f64,
    pub stab: StabKind,
    pub condensed: bool,
    pub operators: OperatorConfig,
    pub newton: NewtonOptions,
}

impl RunSettings {
    pub fn new(k: i32, l: i32, p: f64, stab: StabKind) -> Self {
        Self {
            k,
            l,
            p,
            stab,
            condensed: true,
            operators: OperatorConfig::default(),
            newton: NewtonOptions::default(),
        }
    }
}

/// Solve one problem on one mesh and record errors and timings.
pub fn run_single(
    mesh: &PolytopalMesh,
    family_name: &str,
    problem: &ProblemSpec,
    settings: &RunSettings,
) -> Result<(ConvergenceRecord, GlobalDofVector)> {
    let start = Instant::now();
    let spec = SpaceSpec::new(settings.k, settings.l)?;
    let disc = Discretization::build(mesh, spec, settings.stab, settings.operators)?;
    let mut newton = settings.newton;
    newton.condensed = settings.condensed;
    let (u, report) = newton_solve(&disc, problem, None, newton)?;
    if !report.converged {
        return Err(Error::MaxIterations(report.iterations, report.final_residual));
    }
    let exact = problem
        .exact
        .as_ref()
        .ok_or_else(|| Error::Spec("error measurement needs an exact solution".into()))?;
    let (err_grad, err_pot) = measure_errors(&disc, &u, exact, settings.p);
    let record = ConvergenceRecord {
        family: family_name.to_string(),
        k: settings.k,
        l: settings.l,
        p: settings.p,
        stab: settings.stab,
        h: mesh.h,
        n_dofs_total: disc.n_dofs_total(),
        n_dofs_condensed: disc.n_dofs_condensed(),
        err_grad,
        err_pot,
        newton_iters: report.iterations,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok((record, u))
}

/// Run a refinement sweep of one (family, k, l, p, stab) combination.
pub fn run_family_study(
    family: MeshFamily,
    refinements: &[usize],
    case: TestCase,
    settings: &RunSettings,
) -> Result<Vec<ConvergenceRecord>> {
    let problem = case.problem(settings.p);
    refinements
        .iter()
        .map(|&n| {
            let mesh = MeshFamilySpec::new(family, n).generate()?;
            run_single(&mesh, family.name(), &problem, settings).map(|(r, _)| r)
        })
        .collect()
}

/// Least-squares slope of the gradient error on the last (up to) 3 levels.
pub fn gradient_error_slope(records: &[ConvergenceRecord]) -> f64 {
    let tail = &records[records.len().saturating_sub(3)..];
    let pairs: Vec<(f64, f64)> = tail.iter().map(|r| (r.h, r.err_grad)).collect();
    loglog_slope(&pairs)
}

/// Least-squares slope of arbitrary (h, value) samples on the last 3 points.
pub fn tail_slope(samples: &[(f64, f64)]) -> f64 {
    let tail = &samples[samples.len().saturating_sub(3)..];
    loglog_slope(tail)
}
