//! Stabilizing contributions added to the consistent gradient so that the
//! reconstructed gradient norm controls all unknowns.
//!
//! Three gradient stabilizations are provided:
//! - `Rtn`: face-by-face Riesz lifting of the difference residuals on a
//!   Raviart-Thomas-Nedelec space of degree k+1 over the face sub-triangle;
//! - `Hmm`: the closed-form lowest-order lifting (k = 0 only), matching the
//!   hybrid-mixed-mimetic family;
//! - `Alt`: the lifting adapted to the potential-based gradient, built on a
//!   Raviart-Thomas-Nedelec space of degree max(l, k) and orthogonal only to
//!   gradients of P^{k+1}.
//!
//! `Hho` selects the scheme variant where stability comes from a separate
//! face penalty instead of a gradient correction.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::basis::{poly2_dim, ScaledBasis2d};
use crate::error::{Error, Result};
use crate::geometry::{self, Point, Vector};
use crate::operators::ElementOps;

/// Relative pivot cutoff for the lifting Gram factorizations.
pub const RT_PIVOT_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StabKind {
    Rtn,
    Hmm,
    Alt,
    Hho,
}

impl StabKind {
    pub fn name(&self) -> &'static str {
        match self {
            StabKind::Rtn => "rtn",
            StabKind::Hmm => "hmm",
            StabKind::Alt => "alt",
            StabKind::Hho => "hho",
        }
    }
}

impl fmt::Display for StabKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StabKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rtn" => Ok(StabKind::Rtn),
            "hmm" => Ok(StabKind::Hmm),
            "alt" => Ok(StabKind::Alt),
            "hho" => Ok(StabKind::Hho),
            other => Err(Error::Spec(format!("unknown stabilization '{other}'"))),
        }
    }
}

/// Raviart-Thomas-Nedelec space RT^m on a sub-triangle with apex at the
/// element star point: full vector polynomials of degree m plus the radial
/// fields (x - apex) times homogeneous degree-m monomials. The radial fields
/// have zero normal trace on the two lateral edges through the apex, and
/// constant-in-normal trace of degree m on the base face.
pub struct RtSpace {
    pub degree: i32,
    pub apex: Point,
    pub scale: f64,
    scalar: ScaledBasis2d,
}

impl RtSpace {
    pub fn new(triangle: &[Point; 3], degree: i32) -> Self {
        let apex = triangle[2];
        let center = Point::from(
            (triangle[0].coords + triangle[1].coords + triangle[2].coords) / 3.0,
        );
        let scale = geometry::diameter(triangle);
        Self {
            degree,
            apex,
            scale,
            scalar: ScaledBasis2d::new(center, scale, degree),
        }
    }

    pub fn n_scalar(&self) -> usize {
        self.scalar.dim()
    }

    /// 2 dim(P^m) vector monomials plus (m+1) radial generators.
    pub fn dim(&self) -> usize {
        2 * self.n_scalar() + (self.degree + 1).max(0) as usize
    }

    /// Component value tables at `points` (n_points x dim each).
    pub fn eval(&self, points: &[Point]) -> (DMatrix<f64>, DMatrix<f64>) {
        let ns = self.n_scalar();
        let nr = (self.degree + 1).max(0) as usize;
        let dim = self.dim();
        let phi = self.scalar.eval(points);
        let mut vx = DMatrix::zeros(points.len(), dim);
        let mut vy = DMatrix::zeros(points.len(), dim);
        vx.columns_mut(0, ns).copy_from(&phi);
        vy.columns_mut(ns, ns).copy_from(&phi);
        for (q, p) in points.iter().enumerate() {
            let xs = (p.x - self.apex.x) / self.scale;
            let ys = (p.y - self.apex.y) / self.scale;
            for j in 0..nr {
                let mono = xs.powi(j as i32) * ys.powi(self.degree - j as i32);
                vx[(q, 2 * ns + j)] = xs * mono;
                vy[(q, 2 * ns + j)] = ys * mono;
            }
        }
        (vx, vy)
    }
}

/// Diagonal-pivoted Cholesky for symmetric positive semi-definite matrices;
/// directions below the relative pivot cutoff are dropped.
pub struct PivotedCholesky {
    l: DMatrix<f64>,
    perm: Vec<usize>,
    pub rank: usize,
}

impl PivotedCholesky {
    pub fn new(mut a: DMatrix<f64>, rel_cutoff: f64) -> Self {
        let n = a.nrows();
        let mut perm: Vec<usize> = (0..n).collect();
        let max_diag = (0..n).map(|i| a[(i, i)]).fold(0.0, f64::max);
        let cutoff = rel_cutoff * max_diag;
        let mut l = DMatrix::zeros(n, n);
        let mut rank = n;
        for j in 0..n {
            // Largest remaining diagonal entry becomes the pivot.
            let (imax, pivot) = (j..n)
                .map(|i| (i, a[(i, i)]))
                .max_by(|x, y| x.1.total_cmp(&y.1))
                .unwrap();
            if pivot <= cutoff {
                rank = j;
                break;
            }
            if imax != j {
                a.swap_rows(j, imax);
                a.swap_columns(j, imax);
                l.swap_rows(j, imax);
                perm.swap(j, imax);
            }
            let d = pivot.sqrt();
            l[(j, j)] = d;
            for r in j + 1..n {
                l[(r, j)] = a[(r, j)] / d;
            }
            for r in j + 1..n {
                for c in j + 1..=r {
                    a[(r, c)] -= l[(r, j)] * l[(c, j)];
                    a[(c, r)] = a[(r, c)];
                }
            }
        }
        Self { l, perm, rank }
    }

    /// Solve A x = b columnwise for consistent right-hand sides; dropped
    /// directions receive zero coefficients.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.l.nrows();
        let r = self.rank;
        let cols = b.ncols();
        let mut x = DMatrix::zeros(n, cols);
        for col in 0..cols {
            let mut z = DVector::zeros(r);
            for i in 0..r {
                let mut s = b[(self.perm[i], col)];
                for k in 0..i {
                    s -= self.l[(i, k)] * z[k];
                }
                z[i] = s / self.l[(i, i)];
            }
            for i in (0..r).rev() {
                let mut s = z[i];
                for k in i + 1..r {
                    s -= self.l[(k, i)] * z[k];
                }
                z[i] = s / self.l[(i, i)];
            }
            for i in 0..r {
                x[(self.perm[i], col)] = z[i];
            }
        }
        x
    }
}

/// Per-face lifting: coefficients of the lifted field in the RT basis.
pub struct FaceLifting {
    pub rt: RtSpace,
    /// n_rt x n_dof.
    pub coeffs: DMatrix<f64>,
}

/// Element stabilization: a piecewise polynomial vector field on the
/// face-based sub-triangles (zero extension outside each one).
pub enum StabOperator {
    /// HHO: stability comes from a separate face penalty.
    None,
    /// RTN or ALT lifting.
    Lifted(Vec<FaceLifting>),
    /// Lowest-order closed form: on each sub-triangle the constant field
    /// (2 / d_TF) (delta_TF v) n_TF.
    LowestOrder(Vec<(f64, Vector)>),
}

impl StabOperator {
    pub fn build(kind: StabKind, ops: &ElementOps) -> Result<Self> {
        match kind {
            StabKind::Hho => Ok(StabOperator::None),
            StabKind::Hmm => {
                if ops.spec.face_degree != 0 {
                    return Err(Error::Spec(format!(
                        "lowest-order stabilization requires k = 0, got k = {}",
                        ops.spec.face_degree
                    )));
                }
                let rows = (0..ops.n_faces())
                    .map(|fi| {
                        let d = ops.submesh.face_distances[fi];
                        (2.0 / d, ops.normals[fi])
                    })
                    .collect();
                Ok(StabOperator::LowestOrder(rows))
            }
            StabKind::Rtn | StabKind::Alt => {
                let m = if kind == StabKind::Rtn {
                    ops.spec.face_degree + 1
                } else {
                    ops.spec.face_degree.max(ops.spec.elem_degree)
                };
                let nk = ops.basis_k.dim();
                // Volumetric source in P^k(T)^2 coefficients.
                let source = if kind == StabKind::Rtn {
                    -(&ops.grad_defect - &ops.grad_diff)
                } else {
                    ops.grad_diff.clone()
                };
                let phi_k_cols = |pts: &[Point]| ops.basis_k.eval(pts);
                let mut liftings = Vec::with_capacity(ops.n_faces());
                for fi in 0..ops.n_faces() {
                    let tri = &ops.submesh.triangles[fi];
                    let rt = RtSpace::new(tri, m);
                    let range = ops.quad.sub_ranges[fi].clone();
                    let pts = &ops.quad.rule.points[range.clone()];
                    let wts = &ops.quad.rule.weights[range];
                    let (rx, ry) = rt.eval(pts);
                    let dim = rt.dim();
                    let mut gram = DMatrix::zeros(dim, dim);
                    for i in 0..dim {
                        for j in 0..=i {
                            let mut s = 0.0;
                            for (q, &wq) in wts.iter().enumerate() {
                                s += wq * (rx[(q, i)] * rx[(q, j)] + ry[(q, i)] * ry[(q, j)]);
                            }
                            gram[(i, j)] = s;
                            gram[(j, i)] = s;
                        }
                    }
                    let chol = PivotedCholesky::new(gram, RT_PIVOT_CUTOFF);
                    if chol.rank == 0 {
                        return Err(Error::SingularGram(format!(
                            "element {}: degenerate lifting space on face {fi}",
                            ops.element
                        )));
                    }
                    // Volumetric term: (source, eta) over the sub-triangle.
                    let phi = phi_k_cols(pts);
                    let sx = &phi * source.rows(0, nk);
                    let sy = &phi * source.rows(nk, nk);
                    let mut rhs = DMatrix::zeros(dim, ops.n_dof);
                    for i in 0..dim {
                        for c in 0..ops.n_dof {
                            let mut s = 0.0;
                            for (q, &wq) in wts.iter().enumerate() {
                                s += wq * (rx[(q, i)] * sx[(q, c)] + ry[(q, i)] * sy[(q, c)]);
                            }
                            rhs[(i, c)] = s;
                        }
                    }
                    // Face term: ((delta_TF - delta_T) v, eta . n)_F.
                    let fd = &ops.face_data[fi];
                    let (fx, fy) = rt.eval(&fd.rule.points);
                    let n = ops.normals[fi];
                    for i in 0..dim {
                        for c in 0..ops.n_dof {
                            let mut s = 0.0;
                            for (q, &wq) in fd.rule.weights.iter().enumerate() {
                                let etan = fx[(q, i)] * n.x + fy[(q, i)] * n.y;
                                s += wq * etan * ops.jumps[fi][(q, c)];
                            }
                            rhs[(i, c)] += s;
                        }
                    }
                    let coeffs = chol.solve_mat(&rhs);
                    liftings.push(FaceLifting { rt, coeffs });
                }
                Ok(StabOperator::Lifted(liftings))
            }
        }
    }

    /// Stabilization value tables at the composite-rule points
    /// (n_q x n_dof per component; zero off each face block).
    pub fn value_tables(&self, ops: &ElementOps) -> (DMatrix<f64>, DMatrix<f64>) {
        let nq = ops.quad.rule.points.len();
        let mut vx = DMatrix::zeros(nq, ops.n_dof);
        let mut vy = DMatrix::zeros(nq, ops.n_dof);
        match self {
            StabOperator::None => {}
            StabOperator::Lifted(liftings) => {
                for (fi, lift) in liftings.iter().enumerate() {
                    let range = ops.quad.sub_ranges[fi].clone();
                    let pts = &ops.quad.rule.points[range.clone()];
                    let (rx, ry) = lift.rt.eval(pts);
                    let bx = rx * &lift.coeffs;
                    let by = ry * &lift.coeffs;
                    vx.rows_mut(range.start, range.len()).copy_from(&bx);
                    vy.rows_mut(range.start, range.len()).copy_from(&by);
                }
            }
            StabOperator::LowestOrder(rows) => {
                for (fi, (scale, normal)) in rows.iter().enumerate() {
                    let range = ops.quad.sub_ranges[fi].clone();
                    // delta_TF is a single coefficient for k = 0.
                    let row = ops.diff_face[fi].row(0);
                    for q in range {
                        for c in 0..ops.n_dof {
                            vx[(q, c)] = scale * normal.x * row[c];
                            vy[(q, c)] = scale * normal.y * row[c];
                        }
                    }
                }
            }
        }
        (vx, vy)
    }

    /// Stabilization values for one local vector.
    pub fn values_of(&self, ops: &ElementOps, v: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let nq = ops.quad.rule.points.len();
        let mut vx = DVector::zeros(nq);
        let mut vy = DVector::zeros(nq);
        match self {
            StabOperator::None => {}
            StabOperator::Lifted(liftings) => {
                for (fi, lift) in liftings.iter().enumerate() {
                    let range = ops.quad.sub_ranges[fi].clone();
                    let pts = &ops.quad.rule.points[range.clone()];
                    let (rx, ry) = lift.rt.eval(pts);
                    let c = &lift.coeffs * v;
                    let bx = rx * &c;
                    let by = ry * &c;
                    vx.rows_mut(range.start, range.len()).copy_from(&bx);
                    vy.rows_mut(range.start, range.len()).copy_from(&by);
                }
            }
            StabOperator::LowestOrder(rows) => {
                for (fi, (scale, normal)) in rows.iter().enumerate() {
                    let delta = (ops.diff_face[fi].row(0) * v)[0];
                    for q in ops.quad.sub_ranges[fi].clone() {
                        vx[q] = scale * normal.x * delta;
                        vy[q] = scale * normal.y * delta;
                    }
                }
            }
        }
        (vx, vy)
    }

    /// ||S v||_{L^p(T)}^p.
    pub fn norm_pow(&self, ops: &ElementOps, v: &DVector<f64>, p: f64) -> f64 {
        let (vx, vy) = self.values_of(ops, v);
        ops.quad
            .rule
            .weights
            .iter()
            .enumerate()
            .map(|(q, &wq)| wq * (vx[q] * vx[q] + vy[q] * vy[q]).sqrt().powf(p))
            .sum()
    }

    /// Polynomial degree of the stabilization image on the sub-triangles.
    pub fn image_degree(&self) -> Option<i32> {
        match self {
            StabOperator::None => None,
            StabOperator::Lifted(liftings) => {
                Some(liftings.first().map_or(0, |l| l.rt.degree + 1))
            }
            StabOperator::LowestOrder(_) => Some(0),
        }
    }
}

/// dim RT^m on a triangle: (m+1)(m+3).
pub fn rt_dim(m: i32) -> usize {
    2 * poly2_dim(m) + (m + 1).max(0) as usize
}
