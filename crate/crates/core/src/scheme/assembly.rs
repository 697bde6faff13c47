//! Element-by-element assembly of the gradient schemes and their Newton
//! linearizations, with optional static condensation of element unknowns.
//!
//! Every path produces per-element dense blocks (Jacobian and residual at
//! the current iterate); the global solve eliminates boundary-face DOFs
//! (strong Dirichlet data) and optionally the element blocks (exact Schur
//! complements), then factors the remaining face-coupled sparse system.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{flux_eval, flux_tangent, ProblemSpec};
use crate::discretization::{DiscrElement, Discretization};
use crate::error::{Error, Result};
use crate::geometry::Vector;
use crate::sparse::{Factorization, TripletBuffer};
use crate::space::GlobalDofVector;
use crate::stabilization::StabKind;

/// Dense Jacobian and residual of one element at the current iterate.
pub struct LocalSystem {
    pub matrix: DMatrix<f64>,
    pub residual: DVector<f64>,
}

/// Global linearized system: J correction = -residual.
pub struct AssembledSystem<'d, 'm> {
    pub disc: &'d Discretization<'m>,
    pub locals: Vec<LocalSystem>,
    /// Current iterate; boundary-face blocks hold the Dirichlet data.
    pub base: GlobalDofVector,
    pub condensed: bool,
}

impl<'d, 'm> AssembledSystem<'d, 'm> {
    /// Euclidean norm of the assembled residual over free DOFs.
    pub fn residual_norm(&self) -> f64 {
        let (to_free, free) = self.disc.layout.free_dofs();
        let mut r = DVector::<f64>::zeros(free.len());
        for (t, local) in self.locals.iter().enumerate() {
            let idx = self
                .disc
                .layout
                .local_indices(t, &self.disc.elements[t].ops.faces);
            for (li, &gi) in idx.iter().enumerate() {
                if let Some(fi) = to_free[gi] {
                    r[fi] += local.residual[li];
                }
            }
        }
        r.norm()
    }

    /// Solve for the Newton correction (zeros in boundary-face blocks).
    pub fn solve_correction(&self) -> Result<GlobalDofVector> {
        if self.condensed {
            self.solve_condensed()
        } else {
            self.solve_full()
        }
    }

    fn solve_full(&self) -> Result<GlobalDofVector> {
        let layout = &self.disc.layout;
        let (to_free, free) = layout.free_dofs();
        let n = free.len();
        let mut triplets = TripletBuffer::new(n);
        let mut rhs = DVector::zeros(n);
        for (t, local) in self.locals.iter().enumerate() {
            let idx = layout.local_indices(t, &self.disc.elements[t].ops.faces);
            for (li, &gi) in idx.iter().enumerate() {
                let Some(fi) = to_free[gi] else { continue };
                rhs[fi] -= local.residual[li];
                for (lj, &gj) in idx.iter().enumerate() {
                    if let Some(fj) = to_free[gj] {
                        triplets.push(fi, fj, local.matrix[(li, lj)]);
                    }
                }
            }
        }
        let matrix = triplets.build()?;
        let factor = Factorization::symmetric(&matrix)?;
        let delta_free = factor.solve(&rhs);
        let mut delta = layout.zero_vector();
        for (fi, &gi) in free.iter().enumerate() {
            delta[gi] = delta_free[fi];
        }
        Ok(delta)
    }

    /// Eliminate element blocks exactly, solve the face-coupled Schur
    /// system, then recover element corrections by back-substitution.
    fn solve_condensed(&self) -> Result<GlobalDofVector> {
        let layout = &self.disc.layout;
        let spec = layout.spec;
        let ne = spec.elem_dim();
        // Face-unknown indexing (interior faces only).
        let mut face_index: Vec<Option<usize>> = vec![None; layout.n_faces];
        let mut n_unk = 0;
        for f in 0..layout.n_faces {
            if !layout.boundary[f] {
                face_index[f] = Some(n_unk);
                n_unk += 1;
            }
        }
        let nf = spec.face_dim();
        let n = n_unk * nf;
        struct Condensed {
            schur: DMatrix<f64>,
            rhs_f: DVector<f64>,
            /// A_ee^{-1} applied to (residual_e, A_ef) for back-substitution.
            inv_re: DVector<f64>,
            inv_aef: DMatrix<f64>,
        }
        let parts: Vec<Condensed> = self
            .locals
            .par_iter()
            .enumerate()
            .map(|(t, local)| {
                let n_loc = local.matrix.nrows();
                let nfb = n_loc - ne;
                if ne == 0 {
                    return Ok(Condensed {
                        schur: local.matrix.clone(),
                        rhs_f: -local.residual.clone(),
                        inv_re: DVector::zeros(0),
                        inv_aef: DMatrix::zeros(0, nfb),
                    });
                }
                let a_ee = local.matrix.view((0, 0), (ne, ne)).into_owned();
                let a_ef = local.matrix.view((0, ne), (ne, nfb)).into_owned();
                let a_fe = local.matrix.view((ne, 0), (nfb, ne)).into_owned();
                let a_ff = local.matrix.view((ne, ne), (nfb, nfb)).into_owned();
                let r_e = local.residual.rows(0, ne).into_owned();
                let r_f = local.residual.rows(ne, nfb).into_owned();
                let chol = a_ee.clone().cholesky().ok_or_else(|| {
                    Error::SingularSystem(format!("element {t}: singular element block"))
                })?;
                let inv_aef = chol.solve(&a_ef);
                let inv_re = chol.solve(&r_e);
                let schur = &a_ff - &a_fe * &inv_aef;
                let rhs_f = -r_f + a_fe * &inv_re;
                Ok(Condensed {
                    schur,
                    rhs_f,
                    inv_re,
                    inv_aef,
                })
            })
            .collect::<Result<_>>()?;
        // Scatter the Schur complements into the interior-face system.
        let mut triplets = TripletBuffer::new(n);
        let mut rhs = DVector::zeros(n);
        let face_dof = |f: usize, m: usize| face_index[f].map(|u| u * nf + m);
        for (t, part) in parts.iter().enumerate() {
            let ops = &self.disc.elements[t].ops;
            let n_faces = ops.n_faces();
            for fi in 0..n_faces {
                for m in 0..nf {
                    let Some(gi) = face_dof(ops.faces[fi], m) else { continue };
                    rhs[gi] += part.rhs_f[fi * nf + m];
                    for fj in 0..n_faces {
                        for mm in 0..nf {
                            if let Some(gj) = face_dof(ops.faces[fj], mm) {
                                triplets.push(gi, gj, part.schur[(fi * nf + m, fj * nf + mm)]);
                            }
                        }
                    }
                }
            }
        }
        let matrix = triplets.build()?;
        let factor = Factorization::symmetric(&matrix)?;
        let delta_faces = factor.solve(&rhs);
        // Expand to the full layout and back-substitute element corrections.
        let mut delta = layout.zero_vector();
        for f in 0..layout.n_faces {
            if let Some(u) = face_index[f] {
                for (m, gi) in layout.face_block(f).enumerate() {
                    delta[gi] = delta_faces[u * nf + m];
                }
            }
        }
        if ne > 0 {
            for (t, part) in parts.iter().enumerate() {
                let ops = &self.disc.elements[t].ops;
                let mut df = DVector::zeros(ops.n_faces() * nf);
                for fi in 0..ops.n_faces() {
                    if let Some(u) = face_index[ops.faces[fi]] {
                        for m in 0..nf {
                            df[fi * nf + m] = delta_faces[u * nf + m];
                        }
                    }
                }
                let de = -&part.inv_re - &part.inv_aef * df;
                for (i, gi) in layout.elem_block(t).enumerate() {
                    delta[gi] = de[i];
                }
            }
        }
        Ok(delta)
    }
}

/// Weighted Gram of gradient value tables: sum_q w_q B_q^T B_q.
fn gradient_gram(gx: &DMatrix<f64>, gy: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut sx = gx.clone();
    let mut sy = gy.clone();
    for (q, &wq) in w.iter().enumerate() {
        sx.row_mut(q).scale_mut(wq);
        sy.row_mut(q).scale_mut(wq);
    }
    gx.transpose() * sx + gy.transpose() * sy
}

/// Element load vector (f, Pi v)_T.
fn local_load(de: &DiscrElement, problem: &ProblemSpec) -> DVector<f64> {
    let ops = &de.ops;
    let pi = ops.pi_matrix();
    let mut fw = DVector::zeros(ops.quad.rule.points.len());
    for (q, &p) in ops.quad.rule.points.iter().enumerate() {
        fw[q] = ops.quad.rule.weights[q] * (problem.source)(p);
    }
    pi.transpose() * fw
}

/// Local stiffness and residual of the linear scheme at iterate `u_local`.
fn local_linear(
    de: &DiscrElement,
    kind: StabKind,
    problem: &ProblemSpec,
    u_local: &DVector<f64>,
) -> LocalSystem {
    let ops = &de.ops;
    let w = &ops.quad.rule.weights;
    let mut a = match kind {
        StabKind::Hho => {
            // Potential-gradient consistency term plus the face penalty.
            let pts = &ops.quad.rule.points;
            let (dx, dy) = ops.basis_k1.eval_grad(pts);
            let gx = &dx * &ops.pot_rec;
            let gy = &dy * &ops.pot_rec;
            let mut a = gradient_gram(&gx, &gy, w);
            for (fi, fd) in ops.face_data.iter().enumerate() {
                let jump = &ops.jumps[fi];
                let mut sj = jump.clone();
                for (q, &wq) in fd.rule.weights.iter().enumerate() {
                    sj.row_mut(q).scale_mut(wq / fd.length);
                }
                a += jump.transpose() * sj;
            }
            a
        }
        _ => {
            let (gx, gy) = de.gradient_tables(kind);
            gradient_gram(&gx, &gy, w)
        }
    };
    symmetrize(&mut a);
    let b = local_load(de, problem);
    let residual = &a * u_local - b;
    LocalSystem {
        matrix: a,
        residual,
    }
}

/// Local Jacobian and residual of the p-Laplace scheme at `u_local` with
/// regularization `eps`. For the HHO variant the consistency term uses the
/// consistent gradient and stability comes from the h_F^{1-p}-scaled face
/// penalty.
fn local_plaplace(
    de: &DiscrElement,
    kind: StabKind,
    problem: &ProblemSpec,
    u_local: &DVector<f64>,
    eps: f64,
    with_jacobian: bool,
) -> LocalSystem {
    let ops = &de.ops;
    let p = problem.p;
    let w = &ops.quad.rule.weights;
    let nq = w.len();
    let (gx, gy) = match kind {
        StabKind::Hho => {
            let pts = &ops.quad.rule.points;
            let nk = ops.basis_k.dim();
            let phi_k = ops.basis_k.eval(pts);
            (
                &phi_k * ops.grad_rec.rows(0, nk),
                &phi_k * ops.grad_rec.rows(nk, nk),
            )
        }
        _ => de.gradient_tables(kind),
    };
    let gux = &gx * u_local;
    let guy = &gy * u_local;
    let n = ops.n_dof;
    let mut residual = -local_load(de, problem);
    let mut matrix = DMatrix::zeros(if with_jacobian { n } else { 0 }, n);
    for q in 0..nq {
        let wq = w[q];
        let g = Vector::new(gux[q], guy[q]);
        let sig = flux_eval(p, eps, g);
        for i in 0..n {
            residual[i] += wq * (sig.x * gx[(q, i)] + sig.y * gy[(q, i)]);
        }
        if with_jacobian {
            let tan = flux_tangent(p, eps, g) * wq;
            for i in 0..n {
                let bi = Vector::new(gx[(q, i)], gy[(q, i)]);
                let tbi = tan * bi;
                for j in 0..=i {
                    let v = tbi.x * gx[(q, j)] + tbi.y * gy[(q, j)];
                    matrix[(i, j)] += v;
                    if i != j {
                        matrix[(j, i)] += v;
                    }
                }
            }
        }
    }
    if kind == StabKind::Hho {
        for (fi, fd) in ops.face_data.iter().enumerate() {
            let scale = fd.length.powf(1.0 - p);
            let jump = &ops.jumps[fi];
            let ju = jump * u_local;
            for (q, &wq) in fd.rule.weights.iter().enumerate() {
                let a = ju[q].abs();
                let s = if a == 0.0 { 0.0 } else { a.powf(p - 2.0) * ju[q] };
                for i in 0..ops.n_dof {
                    residual[i] += scale * wq * s * jump[(q, i)];
                }
                if with_jacobian {
                    let d = if a == 0.0 {
                        0.0
                    } else {
                        (p - 1.0) * a.powf(p - 2.0)
                    };
                    for i in 0..ops.n_dof {
                        for j in 0..=i {
                            let v = scale * wq * d * jump[(q, i)] * jump[(q, j)];
                            matrix[(i, j)] += v;
                            if i != j {
                                matrix[(j, i)] += v;
                            }
                        }
                    }
                }
            }
        }
    }
    LocalSystem {
        matrix,
        residual,
    }
}

fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Assemble the linear diffusion scheme at the Dirichlet lift.
pub fn assemble_linear<'d, 'm>(
    disc: &'d Discretization<'m>,
    problem: &ProblemSpec,
    condensed: bool,
) -> AssembledSystem<'d, 'm> {
    let base = disc.boundary_values(|p| (problem.dirichlet)(p));
    let locals: Vec<LocalSystem> = disc
        .elements
        .par_iter()
        .enumerate()
        .map(|(t, de)| {
            let u_local = disc.local_vector(t, &base);
            local_linear(de, disc.stab_kind, problem, &u_local)
        })
        .collect();
    AssembledSystem {
        disc,
        locals,
        base,
        condensed,
    }
}

/// Assemble the p-Laplace residual and exact tangent at iterate `u`.
pub fn assemble_plaplace<'d, 'm>(
    disc: &'d Discretization<'m>,
    problem: &ProblemSpec,
    u: &GlobalDofVector,
    eps: f64,
    condensed: bool,
) -> AssembledSystem<'d, 'm> {
    let locals: Vec<LocalSystem> = disc
        .elements
        .par_iter()
        .enumerate()
        .map(|(t, de)| {
            let u_local = disc.local_vector(t, u);
            local_plaplace(de, disc.stab_kind, problem, &u_local, eps, true)
        })
        .collect();
    AssembledSystem {
        disc,
        locals,
        base: u.clone(),
        condensed,
    }
}

/// Norm of the residual at `u` without forming Jacobians.
pub fn residual_norm_at(
    disc: &Discretization<'_>,
    problem: &ProblemSpec,
    u: &GlobalDofVector,
    eps: f64,
) -> f64 {
    let locals: Vec<LocalSystem> = disc
        .elements
        .par_iter()
        .enumerate()
        .map(|(t, de)| {
            let u_local = disc.local_vector(t, u);
            if problem.is_linear() {
                local_linear(de, disc.stab_kind, problem, &u_local)
            } else {
                local_plaplace(de, disc.stab_kind, problem, &u_local, eps, false)
            }
        })
        .collect();
    let sys = AssembledSystem {
        disc,
        locals,
        base: u.clone(),
        condensed: false,
    };
    sys.residual_norm()
}

/// Euclidean norm of the assembled load over free DOFs (the Newton
/// tolerance reference).
pub fn load_norm(disc: &Discretization<'_>, problem: &ProblemSpec) -> f64 {
    let layout = &disc.layout;
    let (to_free, free) = layout.free_dofs();
    let mut load = DVector::<f64>::zeros(free.len());
    let locals: Vec<DVector<f64>> = disc
        .elements
        .par_iter()
        .map(|de| local_load(de, problem))
        .collect();
    for (t, b) in locals.iter().enumerate() {
        let idx = layout.local_indices(t, &disc.elements[t].ops.faces);
        for (li, &gi) in idx.iter().enumerate() {
            if let Some(fi) = to_free[gi] {
                load[fi] += b[li];
            }
        }
    }
    load.norm()
}
