//! Mesh-wide discretization: local operators and stabilizations for every
//! element, the global interpolator, and the discrete norms and seminorms.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::Result;
use crate::geometry::Point;
use crate::mesh::PolytopalMesh;
use crate::operators::{ElementOps, FaceData, OperatorConfig};
use crate::space::{DofLayout, GlobalDofVector, SpaceSpec};
use crate::stabilization::{StabKind, StabOperator};

/// One element of a discretization: operators plus its stabilization.
pub struct DiscrElement {
    pub ops: ElementOps,
    pub stab: StabOperator,
}

impl DiscrElement {
    /// Value tables of the scheme gradient at the composite-rule points
    /// (n_q x n_dof per component): consistent reconstruction plus lifting
    /// for `Rtn`/`Hmm`, potential gradient plus lifting for `Alt`, bare
    /// consistent reconstruction for `Hho` (stability is a separate penalty).
    pub fn gradient_tables(&self, kind: StabKind) -> (DMatrix<f64>, DMatrix<f64>) {
        let ops = &self.ops;
        let pts = &ops.quad.rule.points;
        let nk = ops.basis_k.dim();
        let (mut gx, mut gy) = match kind {
            StabKind::Alt => {
                let (dx, dy) = ops.basis_k1.eval_grad(pts);
                (&dx * &ops.pot_rec, &dy * &ops.pot_rec)
            }
            _ => {
                let phi_k = ops.basis_k.eval(pts);
                (
                    &phi_k * ops.grad_rec.rows(0, nk),
                    &phi_k * ops.grad_rec.rows(nk, nk),
                )
            }
        };
        let (sx, sy) = self.stab.value_tables(ops);
        gx += sx;
        gy += sy;
        (gx, gy)
    }

    /// Scheme-gradient values of one local vector.
    pub fn gradient_values(&self, kind: StabKind, v: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let ops = &self.ops;
        let (mut gx, mut gy) = match kind {
            StabKind::Alt => ops.pot_grad_values(v),
            _ => ops.cons_grad_values(v),
        };
        let (sx, sy) = self.stab.values_of(ops, v);
        gx += sx;
        gy += sy;
        (gx, gy)
    }
}

/// Seminorm triple returned by [`Discretization::seminorms`].
pub struct Seminorms {
    /// Discrete W^{1,p} norm built from the consistent gradient and the
    /// boundary differences.
    pub w1p: f64,
    /// Per-element boundary seminorms |v|_{p, boundary of T}.
    pub boundary: Vec<f64>,
    /// The element-polynomial-based seminorm (gradient of v_T plus scaled
    /// face-element differences).
    pub tilde: f64,
}

pub struct Discretization<'a> {
    pub mesh: &'a PolytopalMesh,
    pub spec: SpaceSpec,
    pub stab_kind: StabKind,
    pub config: OperatorConfig,
    pub layout: DofLayout,
    pub face_data: Vec<Arc<FaceData>>,
    pub elements: Vec<DiscrElement>,
}

impl<'a> Discretization<'a> {
    pub fn build(
        mesh: &'a PolytopalMesh,
        spec: SpaceSpec,
        stab_kind: StabKind,
        config: OperatorConfig,
    ) -> Result<Self> {
        let layout = DofLayout::new(mesh, spec);
        let face_data: Vec<Arc<FaceData>> = (0..mesh.n_faces())
            .into_par_iter()
            .map(|f| FaceData::build(mesh, f, spec, &config).map(Arc::new))
            .collect::<Result<_>>()?;
        let elements: Vec<DiscrElement> = (0..mesh.n_elements())
            .into_par_iter()
            .map(|t| {
                let fds = mesh.element_faces[t]
                    .iter()
                    .map(|&f| face_data[f].clone())
                    .collect();
                let ops = ElementOps::build(mesh, t, spec, &config, fds)?;
                let stab = StabOperator::build(stab_kind, &ops)?;
                Ok(DiscrElement { ops, stab })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            mesh,
            spec,
            stab_kind,
            config,
            layout,
            face_data,
            elements,
        })
    }

    /// Extract the local vector [element block | face blocks] of element t.
    pub fn local_vector(&self, t: usize, global: &GlobalDofVector) -> DVector<f64> {
        let ops = &self.elements[t].ops;
        let mut v = DVector::zeros(ops.n_dof);
        let ne = self.spec.elem_dim();
        for (i, gi) in self.layout.elem_block(t).enumerate() {
            v[i] = global[gi];
        }
        for (fi, &f) in ops.faces.iter().enumerate() {
            for (m, gi) in self.layout.face_block(f).enumerate() {
                v[ne + fi * self.spec.face_dim() + m] = global[gi];
            }
        }
        v
    }

    /// Interpolate a function: element blocks are element L2 projections,
    /// face blocks are face L2 projections of the trace.
    pub fn interpolate(&self, f: impl Fn(Point) -> f64 + Sync) -> GlobalDofVector {
        let mut out = self.layout.zero_vector();
        for (t, de) in self.elements.iter().enumerate() {
            if let Some(proj) = &de.ops.proj_l {
                let c = proj.project(&de.ops.quad.rule, &f);
                for (i, gi) in self.layout.elem_block(t).enumerate() {
                    out[gi] = c[i];
                }
            }
        }
        for (fid, fd) in self.face_data.iter().enumerate() {
            let c = fd.proj.project(&fd.rule, &f);
            for (m, gi) in self.layout.face_block(fid).enumerate() {
                out[gi] = c[m];
            }
        }
        out
    }

    /// Vector with boundary-face blocks interpolating g and zeros elsewhere.
    pub fn boundary_values(&self, g: impl Fn(Point) -> f64) -> GlobalDofVector {
        let mut out = self.layout.zero_vector();
        for (fid, fd) in self.face_data.iter().enumerate() {
            if self.layout.boundary[fid] {
                let c = fd.proj.project(&fd.rule, &g);
                for (m, gi) in self.layout.face_block(fid).enumerate() {
                    out[gi] = c[m];
                }
            }
        }
        out
    }

    /// || grad_D v ||_{L^p}: the scheme-gradient norm.
    pub fn grad_norm(&self, v: &GlobalDofVector, p: f64) -> f64 {
        let total: f64 = self
            .elements
            .par_iter()
            .enumerate()
            .map(|(t, de)| {
                let lv = self.local_vector(t, v);
                let (gx, gy) = de.gradient_values(self.stab_kind, &lv);
                de.ops
                    .quad
                    .rule
                    .weights
                    .iter()
                    .enumerate()
                    .map(|(q, &w)| w * (gx[q] * gx[q] + gy[q] * gy[q]).sqrt().powf(p))
                    .sum::<f64>()
            })
            .sum();
        total.powf(1.0 / p)
    }

    /// || Pi_D v ||_{L^p}: the scalar-reconstruction norm.
    pub fn pi_norm(&self, v: &GlobalDofVector, p: f64) -> f64 {
        let total: f64 = self
            .elements
            .par_iter()
            .enumerate()
            .map(|(t, de)| {
                let lv = self.local_vector(t, v);
                let vals = de.ops.pi_values_at(&lv, &de.ops.quad.rule.points);
                de.ops
                    .quad
                    .rule
                    .weights
                    .iter()
                    .enumerate()
                    .map(|(q, &w)| w * vals[q].abs().powf(p))
                    .sum::<f64>()
            })
            .sum();
        total.powf(1.0 / p)
    }

    /// Discrete W^{1,p} seminorm data: the full norm, the per-element
    /// boundary seminorms, and the element-polynomial variant.
    pub fn seminorms(&self, v: &GlobalDofVector, p: f64) -> Seminorms {
        let parts: Vec<(f64, f64, f64)> = self
            .elements
            .par_iter()
            .enumerate()
            .map(|(t, de)| {
                let lv = self.local_vector(t, v);
                let b = de.ops.boundary_seminorm_pow(&lv, p);
                let g = de.ops.cons_grad_norm_pow(&lv, p);
                let tld = de.ops.tilde_seminorm_pow(&lv, p);
                (b, g, tld)
            })
            .collect();
        let w1p = parts.iter().map(|(b, g, _)| b + g).sum::<f64>().powf(1.0 / p);
        let tilde = parts.iter().map(|(_, _, t)| t).sum::<f64>().powf(1.0 / p);
        let boundary = parts.iter().map(|(b, _, _)| b.powf(1.0 / p)).collect();
        Seminorms {
            w1p,
            boundary,
            tilde,
        }
    }

    /// Total unknown count (all element and face coefficients).
    pub fn n_dofs_total(&self) -> usize {
        self.layout.total_dofs()
    }

    /// Globally coupled unknowns after condensation: interior-face
    /// coefficients.
    pub fn n_dofs_condensed(&self) -> usize {
        let nf = self.spec.face_dim();
        (0..self.layout.n_faces)
            .filter(|&f| !self.layout.boundary[f])
            .count()
            * nf
    }
}
