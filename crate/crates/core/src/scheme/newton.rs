//! Linear solve and the damped Newton iteration with regularization
//! continuation for p < 2.

use super::assembly::{assemble_linear, assemble_plaplace, load_norm, residual_norm_at};
use super::ProblemSpec;
use crate::discretization::Discretization;
use crate::error::{Error, Result};
use crate::space::GlobalDofVector;

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Convergence threshold relative to the load norm.
    pub tol_rel: f64,
    /// Total iteration budget across all continuation stages.
    pub max_iterations: usize,
    /// Backtracking halvings per step before the search is declared stalled.
    pub max_halvings: u32,
    pub condensed: bool,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol_rel: 1e-9,
            max_iterations: 60,
            max_halvings: 30,
            condensed: true,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct NewtonReport {
    pub iterations: usize,
    /// Accepted residual norms, concatenated over continuation stages;
    /// monotone within each stage.
    pub residual_norms: Vec<f64>,
    /// Halvings taken by each accepted step.
    pub damping_history: Vec<u32>,
    /// Regularization values visited.
    pub eps_schedule: Vec<f64>,
    pub converged: bool,
    /// Final unregularized residual relative to the load norm.
    pub final_residual: f64,
}

/// Solve the linear diffusion scheme (one factorization).
pub fn solve_linear(
    disc: &Discretization<'_>,
    problem: &ProblemSpec,
    condensed: bool,
) -> Result<GlobalDofVector> {
    let sys = assemble_linear(disc, problem, condensed);
    let delta = sys.solve_correction()?;
    Ok(sys.base + delta)
}

/// Damped Newton for the p-Laplace scheme. For p < 2 the flux is smoothed
/// with a regularization driven through {1e-2, 1e-4, 1e-6, 1e-10}; for
/// p >= 2 the exact flux is used directly. Non-convergence within the
/// iteration budget is reported through the `converged` flag.
pub fn newton_solve(
    disc: &Discretization<'_>,
    problem: &ProblemSpec,
    initial: Option<GlobalDofVector>,
    opts: NewtonOptions,
) -> Result<(GlobalDofVector, NewtonReport)> {
    if problem.is_linear() {
        let u = solve_linear(disc, problem, opts.condensed)?;
        let reference = load_norm(disc, problem).max(f64::MIN_POSITIVE);
        let res = residual_norm_at(disc, problem, &u, 0.0) / reference;
        return Ok((
            u,
            NewtonReport {
                iterations: 1,
                residual_norms: vec![res * reference],
                damping_history: vec![0],
                eps_schedule: vec![0.0],
                converged: res <= opts.tol_rel.max(1e-10),
                final_residual: res,
            },
        ));
    }
    let reference = load_norm(disc, problem).max(f64::MIN_POSITIVE);
    let tol = opts.tol_rel * reference;
    // Warm start from the linear problem with the same data.
    let mut u = match initial {
        Some(v) => v,
        None => {
            let linear = ProblemSpec {
                p: 2.0,
                flux: super::FluxKind::Linear,
                ..problem.clone()
            };
            solve_linear(disc, &linear, opts.condensed)?
        }
    };
    let schedule: Vec<f64> = if problem.p < 2.0 {
        vec![1e-2, 1e-4, 1e-6, 1e-10]
    } else {
        vec![0.0]
    };
    let mut report = NewtonReport {
        eps_schedule: schedule.clone(),
        ..Default::default()
    };
    let n_stages = schedule.len();
    'stages: for (stage, &eps) in schedule.iter().enumerate() {
        let last_stage = stage + 1 == n_stages;
        // Intermediate stages only need to track the current smoothing.
        let stage_tol = if last_stage {
            tol
        } else {
            tol.max(1e-2 * eps * reference)
        };
        let mut res = residual_norm_at(disc, problem, &u, eps);
        loop {
            if res <= stage_tol {
                continue 'stages;
            }
            if report.iterations >= opts.max_iterations {
                break 'stages;
            }
            let sys = assemble_plaplace(disc, problem, &u, eps, opts.condensed);
            let delta = sys.solve_correction()?;
            let mut alpha = 1.0;
            let mut halvings = 0;
            let (next_u, next_res) = loop {
                let candidate = &u + &delta * alpha;
                let cres = residual_norm_at(disc, problem, &candidate, eps);
                if cres < res {
                    break (candidate, cres);
                }
                halvings += 1;
                if halvings > opts.max_halvings {
                    if last_stage {
                        return Err(Error::LineSearchStall(report.iterations));
                    }
                    // A tighter smoothing usually restores descent.
                    continue 'stages;
                }
                alpha *= 0.5;
            };
            u = next_u;
            res = next_res;
            report.iterations += 1;
            report.residual_norms.push(res);
            report.damping_history.push(halvings);
        }
    }
    let final_abs = residual_norm_at(disc, problem, &u, 0.0);
    report.final_residual = final_abs / reference;
    report.converged = final_abs <= tol.max(1e-9 * reference);
    Ok((u, report))
}
