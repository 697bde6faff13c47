//! Discrete unknown space: broken polynomials of degree l on elements and
//! degree k on faces, stored element-blocks-first in one flat vector.

use nalgebra::DVector;

use crate::basis::{poly1_dim, poly2_dim};
use crate::error::{Error, Result};
use crate::mesh::PolytopalMesh;

/// Degree pair (k, l) with k >= 0 and l in {k-1, k, k+1}.
///
/// For k = 0 and l = -1 no element unknowns are present and element values
/// are reconstructed from face values through fixed weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpaceSpec {
    pub face_degree: i32,
    pub elem_degree: i32,
}

impl SpaceSpec {
    pub fn new(face_degree: i32, elem_degree: i32) -> Result<Self> {
        if face_degree < 0 {
            return Err(Error::Spec(format!("face degree {face_degree} < 0")));
        }
        if !(face_degree - 1..=face_degree + 1).contains(&elem_degree) {
            return Err(Error::Spec(format!(
                "element degree {elem_degree} not in {{k-1, k, k+1}} for k = {face_degree}"
            )));
        }
        Ok(Self {
            face_degree,
            elem_degree,
        })
    }

    /// All admissible element degrees for a given face degree.
    pub fn admissible_elem_degrees(face_degree: i32) -> Vec<i32> {
        (face_degree - 1..=face_degree + 1)
            .filter(|&l| l >= -1)
            .collect()
    }

    pub fn elem_dim(&self) -> usize {
        poly2_dim(self.elem_degree)
    }

    pub fn face_dim(&self) -> usize {
        poly1_dim(self.face_degree)
    }

    /// True when element values are face-weight combinations (l = -1).
    pub fn element_free(&self) -> bool {
        self.elem_degree < 0
    }
}

/// Coefficient vector over the whole mesh (element blocks, then face blocks).
pub type GlobalDofVector = DVector<f64>;

/// Index bookkeeping for the global element-then-faces layout.
#[derive(Debug, Clone)]
pub struct DofLayout {
    pub spec: SpaceSpec,
    pub n_elements: usize,
    pub n_faces: usize,
    /// True for faces on the domain boundary.
    pub boundary: Vec<bool>,
}

impl DofLayout {
    pub fn new(mesh: &PolytopalMesh, spec: SpaceSpec) -> Self {
        Self {
            spec,
            n_elements: mesh.n_elements(),
            n_faces: mesh.n_faces(),
            boundary: mesh.faces.iter().map(|f| f.is_boundary()).collect(),
        }
    }

    pub fn total_dofs(&self) -> usize {
        self.n_elements * self.spec.elem_dim() + self.n_faces * self.spec.face_dim()
    }

    pub fn elem_block(&self, t: usize) -> std::ops::Range<usize> {
        let d = self.spec.elem_dim();
        t * d..(t + 1) * d
    }

    pub fn face_block(&self, f: usize) -> std::ops::Range<usize> {
        let base = self.n_elements * self.spec.elem_dim();
        let d = self.spec.face_dim();
        base + f * d..base + (f + 1) * d
    }

    /// Global indices of the local vector [element block | face blocks].
    pub fn local_indices(&self, t: usize, faces: &[usize]) -> Vec<usize> {
        let mut idx: Vec<usize> = self.elem_block(t).collect();
        for &f in faces {
            idx.extend(self.face_block(f));
        }
        idx
    }

    /// Zero vector of the full layout.
    pub fn zero_vector(&self) -> GlobalDofVector {
        DVector::zeros(self.total_dofs())
    }

    /// Map from full dof index to free index (boundary-face dofs excluded),
    /// and the inverse listing.
    pub fn free_dofs(&self) -> (Vec<Option<usize>>, Vec<usize>) {
        let mut to_free = vec![None; self.total_dofs()];
        let mut free = Vec::new();
        for i in 0..self.n_elements * self.spec.elem_dim() {
            to_free[i] = Some(free.len());
            free.push(i);
        }
        for f in 0..self.n_faces {
            if self.boundary[f] {
                continue;
            }
            for i in self.face_block(f) {
                to_free[i] = Some(free.len());
                free.push(i);
            }
        }
        (to_free, free)
    }

    /// Zero out all boundary-face blocks (projection onto the homogeneous
    /// subspace).
    pub fn apply_zero_boundary(&self, v: &mut GlobalDofVector) {
        for f in 0..self.n_faces {
            if self.boundary[f] {
                for i in self.face_block(f) {
                    v[i] = 0.0;
                }
            }
        }
    }
}
