//! Error measures against a manufactured solution.

use rayon::prelude::*;

use super::ExactSolution;
use crate::discretization::Discretization;
use crate::space::GlobalDofVector;

/// Gradient and potential errors of a discrete solution:
/// the L^p norm of the consistent gradient of (interpolant - solution), and
/// the L^p norm of the scalar reconstruction minus the exact solution.
///
/// The gradient measure uses the consistent reconstruction only (patched
/// over elements), not the stabilized gradient.
pub fn measure_errors(
    disc: &Discretization<'_>,
    u_h: &GlobalDofVector,
    exact: &ExactSolution,
    p: f64,
) -> (f64, f64) {
    let (grad_pow, pot_pow): (f64, f64) = disc
        .elements
        .par_iter()
        .enumerate()
        .map(|(t, de)| {
            let ops = &de.ops;
            let u_local = disc.local_vector(t, u_h);
            let i_local = ops.interpolate_local(|q| (exact.value)(q));
            let diff = &i_local - &u_local;
            let grad = ops.cons_grad_norm_pow(&diff, p);
            let vals = ops.pi_values_at(&u_local, &ops.quad.rule.points);
            let pot: f64 = ops
                .quad
                .rule
                .weights
                .iter()
                .enumerate()
                .map(|(q, &w)| {
                    let e = vals[q] - (exact.value)(ops.quad.rule.points[q]);
                    w * e.abs().powf(p)
                })
                .sum();
            (grad, pot)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    (grad_pow.powf(1.0 / p), pot_pow.powf(1.0 / p))
}
