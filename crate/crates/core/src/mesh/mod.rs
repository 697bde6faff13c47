//! 2D polytopal meshes with explicit face sets.
//!
//! Faces are first-class: a geometric edge of an element may be split into
//! several faces when a neighbour is refined (hanging nodes), so the face
//! list cannot be recovered from element loops alone. The builder derives
//! faces by splitting every loop edge at all mesh vertices that lie on it,
//! then matching sub-segments between elements; the `polymesh` loader can
//! also provide faces explicitly.

mod families;
mod io;
mod submesh;

pub use families::{MeshFamily, MeshFamilySpec};
pub use submesh::{build_submesh, ElementSubmesh, DEFAULT_RHO};

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{self, Point, Vector};

/// Relative tolerance for collinear-subsegment matching in face derivation.
pub const FACE_MATCH_TOL: f64 = 1e-9;

/// Straight mesh face: an interface (two adjacent elements) or a boundary
/// face (one). The stored orientation is canonical for `elements[0]`.
#[derive(Debug, Clone)]
pub struct Face {
    /// Endpoint vertex indices, ordered along the CCW loop of `elements[0]`.
    pub vertices: [usize; 2],
    /// Adjacent elements; `elements[1]` is `None` on the boundary.
    pub elements: [Option<usize>; 2],
    /// Unit normal pointing out of `elements[0]`.
    pub normal: Vector,
    /// Unit tangent from `vertices[0]` to `vertices[1]`.
    pub tangent: Vector,
    pub length: f64,
    pub midpoint: Point,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.elements[1].is_none()
    }

    /// Unit normal pointing out of the given adjacent element.
    pub fn outward_normal(&self, element: usize) -> Vector {
        if self.elements[0] == Some(element) {
            self.normal
        } else {
            debug_assert_eq!(self.elements[1], Some(element));
            -self.normal
        }
    }

    pub fn neighbor_of(&self, element: usize) -> Option<usize> {
        if self.elements[0] == Some(element) {
            self.elements[1]
        } else {
            self.elements[0]
        }
    }
}

#[derive(Debug, Clone)]
pub struct ElementGeometry {
    pub diameter: f64,
    pub area: f64,
    pub centroid: Point,
    pub perimeter: f64,
}

/// Immutable polytopal mesh of a planar domain.
#[derive(Debug, Clone)]
pub struct PolytopalMesh {
    pub vertices: Vec<Point>,
    /// CCW vertex loops.
    pub elements: Vec<Vec<usize>>,
    pub faces: Vec<Face>,
    /// Faces of each element, in loop-traversal order.
    pub element_faces: Vec<Vec<usize>>,
    elem_geo: Vec<ElementGeometry>,
    /// Max element diameter.
    pub h: f64,
}

impl PolytopalMesh {
    /// Build a mesh from vertices and element loops, deriving the face set.
    ///
    /// Clockwise loops are accepted and reoriented. Errors on zero-area or
    /// self-touching elements and on faces shared by more than two elements.
    pub fn from_cells(vertices: Vec<Point>, mut elements: Vec<Vec<usize>>) -> Result<Self> {
        check_and_orient(&vertices, &mut elements)?;
        let faces_by_elem = derive_faces(&vertices, &elements)?;
        Self::assemble(vertices, elements, faces_by_elem)
    }

    /// Build a mesh with an explicit face list `(v0, v1, t0, t1)`, `t1 < 0`
    /// marking boundary faces.
    pub fn from_cells_and_faces(
        vertices: Vec<Point>,
        mut elements: Vec<Vec<usize>>,
        face_list: &[([usize; 2], i64, i64)],
    ) -> Result<Self> {
        check_and_orient(&vertices, &mut elements)?;
        let mut faces_by_elem: Vec<Vec<(usize, usize, Option<usize>)>> =
            vec![Vec::new(); elements.len()];
        for (fid, &([v0, v1], t0, t1)) in face_list.iter().enumerate() {
            if t0 < 0 || t0 as usize >= elements.len() {
                return Err(Error::Parse(format!("face {fid}: bad element id {t0}")));
            }
            let other = if t1 < 0 {
                None
            } else if (t1 as usize) < elements.len() {
                Some(t1 as usize)
            } else {
                return Err(Error::Parse(format!("face {fid}: bad element id {t1}")));
            };
            if v0.max(v1) >= vertices.len() {
                return Err(Error::Parse(format!("face {fid}: bad vertex id")));
            }
            faces_by_elem[t0 as usize].push((v0, v1, other));
        }
        // Each face is listed once; rebuild the per-element view for both sides.
        let mut sided: Vec<Vec<(usize, usize, Option<usize>)>> = vec![Vec::new(); elements.len()];
        for (t0, list) in faces_by_elem.iter().enumerate() {
            for &(v0, v1, other) in list {
                sided[t0].push((v0, v1, other));
                if let Some(t1) = other {
                    sided[t1].push((v1, v0, Some(t0)));
                }
            }
        }
        // Sort each element's faces along its loop and orient every face in
        // the loop direction, so the canonical orientation does not depend on
        // how the file listed the endpoints.
        let mut ordered: Vec<Vec<(usize, usize, Option<usize>)>> = vec![Vec::new(); elements.len()];
        for (t, list) in sided.iter().enumerate() {
            let mut keyed: Vec<((usize, f64), (usize, usize, Option<usize>))> = list
                .iter()
                .map(|&(v0, v1, other)| {
                    let mid = (vertices[v0].coords + vertices[v1].coords) * 0.5;
                    let (edge, tm) = locate_on_loop(&vertices, &elements[t], Point::from(mid))
                        .ok_or_else(|| {
                            Error::Geometry(format!(
                                "face ({v0},{v1}) does not lie on the boundary of element {t}"
                            ))
                        })?;
                    let a = vertices[elements[t][edge]];
                    let b = vertices[elements[t][(edge + 1) % elements[t].len()]];
                    let p0 = geometry::line_parameter(a, b, vertices[v0]);
                    let p1 = geometry::line_parameter(a, b, vertices[v1]);
                    let oriented = if p0 <= p1 { (v0, v1, other) } else { (v1, v0, other) };
                    Ok(((edge, tm), oriented))
                })
                .collect::<Result<_>>()?;
            keyed.sort_by(|a, b| a.0 .0.cmp(&b.0 .0).then(a.0 .1.total_cmp(&b.0 .1)));
            ordered[t] = keyed.into_iter().map(|(_, f)| f).collect();
        }
        Self::assemble(vertices, elements, ordered)
    }

    fn assemble(
        vertices: Vec<Point>,
        elements: Vec<Vec<usize>>,
        faces_by_elem: Vec<Vec<(usize, usize, Option<usize>)>>,
    ) -> Result<Self> {
        let mut faces: Vec<Face> = Vec::new();
        let mut index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut element_faces: Vec<Vec<usize>> = vec![Vec::new(); elements.len()];
        for (t, list) in faces_by_elem.iter().enumerate() {
            for &(v0, v1, _) in list {
                let key = (v0.min(v1), v0.max(v1));
                match index.get(&key) {
                    None => {
                        let a = vertices[v0];
                        let b = vertices[v1];
                        let len = (b - a).norm();
                        if len == 0.0 {
                            return Err(Error::Geometry(format!("zero-length face ({v0},{v1})")));
                        }
                        let tangent = (b - a) / len;
                        // Loop traversal of the first claimer is CCW, so the
                        // outward normal is the clockwise rotation.
                        let normal = Vector::new(tangent.y, -tangent.x);
                        index.insert(key, faces.len());
                        element_faces[t].push(faces.len());
                        faces.push(Face {
                            vertices: [v0, v1],
                            elements: [Some(t), None],
                            normal,
                            tangent,
                            length: len,
                            midpoint: Point::from((a.coords + b.coords) * 0.5),
                        });
                    }
                    Some(&fid) => {
                        let face = &mut faces[fid];
                        if face.elements[0] == Some(t) {
                            continue; // explicit list visits both sides
                        }
                        if face.elements[1].is_some() && face.elements[1] != Some(t) {
                            return Err(Error::Nonmanifold(key.0, key.1));
                        }
                        if face.elements[1].is_none() {
                            face.elements[1] = Some(t);
                            element_faces[t].push(fid);
                        }
                    }
                }
            }
        }
        let elem_geo: Vec<ElementGeometry> = elements
            .iter()
            .map(|loop_ids| {
                let pts: Vec<Point> = loop_ids.iter().map(|&v| vertices[v]).collect();
                let perimeter = loop_ids
                    .iter()
                    .zip(loop_ids.iter().cycle().skip(1))
                    .map(|(&a, &b)| (vertices[b] - vertices[a]).norm())
                    .sum();
                ElementGeometry {
                    diameter: geometry::diameter(&pts),
                    area: geometry::signed_area(&pts),
                    centroid: geometry::centroid(&pts),
                    perimeter,
                }
            })
            .collect();
        let h = elem_geo.iter().map(|g| g.diameter).fold(0.0, f64::max);
        let mesh = Self {
            vertices,
            elements,
            faces,
            element_faces,
            elem_geo,
            h,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn element_geometry(&self, t: usize) -> &ElementGeometry {
        &self.elem_geo[t]
    }

    pub fn element_points(&self, t: usize) -> Vec<Point> {
        self.elements[t].iter().map(|&v| self.vertices[v]).collect()
    }

    /// Face endpoints in the canonical (stored) orientation.
    pub fn face_points(&self, f: usize) -> (Point, Point) {
        let face = &self.faces[f];
        (
            self.vertices[face.vertices[0]],
            self.vertices[face.vertices[1]],
        )
    }

    /// Face endpoints ordered along the CCW traversal of `element`.
    pub fn face_points_from(&self, f: usize, element: usize) -> (Point, Point) {
        let (a, b) = self.face_points(f);
        if self.faces[f].elements[0] == Some(element) {
            (a, b)
        } else {
            (b, a)
        }
    }

    pub fn boundary_faces(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.faces.len()).filter(|&f| self.faces[f].is_boundary())
    }

    /// Check all mesh invariants; called by every constructor.
    pub fn validate(&self) -> Result<()> {
        for (t, geo) in self.elem_geo.iter().enumerate() {
            if geo.area <= 0.0 {
                return Err(Error::Geometry(format!(
                    "element {t} has non-positive area {}",
                    geo.area
                )));
            }
            let tol = 1e-12 * geo.perimeter;
            let mut length_sum = 0.0;
            let mut normal_sum = Vector::zeros();
            for &f in &self.element_faces[t] {
                let face = &self.faces[f];
                length_sum += face.length;
                normal_sum += face.outward_normal(t) * face.length;
            }
            if (length_sum - geo.perimeter).abs() > tol {
                return Err(Error::Geometry(format!(
                    "element {t}: faces cover {length_sum} of perimeter {}",
                    geo.perimeter
                )));
            }
            if normal_sum.norm() > tol {
                return Err(Error::Geometry(format!(
                    "element {t}: weighted normals sum to {:?}",
                    normal_sum
                )));
            }
        }
        // Total element area must match the area enclosed by boundary faces.
        let total: f64 = self.elem_geo.iter().map(|g| g.area).sum();
        let enclosed: f64 = self
            .boundary_faces()
            .map(|f| {
                let face = &self.faces[f];
                0.5 * face.length * face.midpoint.coords.dot(&face.normal)
            })
            .sum();
        if (total - enclosed).abs() > 1e-12 * total {
            return Err(Error::Geometry(format!(
                "element areas sum to {total} but boundary encloses {enclosed}"
            )));
        }
        Ok(())
    }
}

fn check_and_orient(vertices: &[Point], elements: &mut [Vec<usize>]) -> Result<()> {
    for (t, loop_ids) in elements.iter_mut().enumerate() {
        if loop_ids.len() < 3 {
            return Err(Error::Geometry(format!("element {t} has fewer than 3 vertices")));
        }
        if loop_ids.iter().any(|&v| v >= vertices.len()) {
            return Err(Error::Parse(format!("element {t}: vertex index out of range")));
        }
        let pts: Vec<Point> = loop_ids.iter().map(|&v| vertices[v]).collect();
        let area = geometry::signed_area(&pts);
        if area == 0.0 {
            return Err(Error::Geometry(format!("element {t} has zero area")));
        }
        if area < 0.0 {
            loop_ids.reverse();
        }
    }
    Ok(())
}

/// Derive per-element face lists by splitting loop edges at all collinear
/// mesh vertices (hanging nodes included).
fn derive_faces(
    vertices: &[Point],
    elements: &[Vec<usize>],
) -> Result<Vec<Vec<(usize, usize, Option<usize>)>>> {
    let grid = VertexGrid::build(vertices, elements);
    let mut out = Vec::with_capacity(elements.len());
    for loop_ids in elements {
        let mut list = Vec::with_capacity(loop_ids.len());
        for i in 0..loop_ids.len() {
            let va = loop_ids[i];
            let vb = loop_ids[(i + 1) % loop_ids.len()];
            let a = vertices[va];
            let b = vertices[vb];
            let tol = FACE_MATCH_TOL * (b - a).norm();
            let mut cuts: Vec<(f64, usize)> = grid
                .near_segment(a, b)
                .into_iter()
                .filter(|&v| v != va && v != vb)
                .filter_map(|v| {
                    let p = vertices[v];
                    if geometry::line_distance(a, b, p) > tol {
                        return None;
                    }
                    let t = geometry::line_parameter(a, b, p);
                    (t > FACE_MATCH_TOL && t < 1.0 - FACE_MATCH_TOL).then_some((t, v))
                })
                .collect();
            cuts.sort_by(|x, y| x.0.total_cmp(&y.0));
            let mut prev = va;
            for &(_, v) in &cuts {
                list.push((prev, v, None));
                prev = v;
            }
            list.push((prev, vb, None));
        }
        out.push(list);
    }
    Ok(out)
}

/// Locate the loop edge containing `p`; returns (edge index, parameter).
fn locate_on_loop(vertices: &[Point], loop_ids: &[usize], p: Point) -> Option<(usize, f64)> {
    for i in 0..loop_ids.len() {
        let a = vertices[loop_ids[i]];
        let b = vertices[loop_ids[(i + 1) % loop_ids.len()]];
        let tol = FACE_MATCH_TOL * (b - a).norm();
        if geometry::line_distance(a, b, p) <= tol {
            let t = geometry::line_parameter(a, b, p);
            if (-FACE_MATCH_TOL..=1.0 + FACE_MATCH_TOL).contains(&t) {
                return Some((i, t));
            }
        }
    }
    None
}

/// Uniform-grid spatial hash for point-on-segment queries.
struct VertexGrid {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl VertexGrid {
    fn build(vertices: &[Point], elements: &[Vec<usize>]) -> Self {
        let mut max_edge: f64 = 0.0;
        for loop_ids in elements {
            for i in 0..loop_ids.len() {
                let a = vertices[loop_ids[i]];
                let b = vertices[loop_ids[(i + 1) % loop_ids.len()]];
                max_edge = max_edge.max((b - a).norm());
            }
        }
        let cell = max_edge.max(1e-12);
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (v, p) in vertices.iter().enumerate() {
            buckets
                .entry(((p.x / cell).floor() as i64, (p.y / cell).floor() as i64))
                .or_default()
                .push(v);
        }
        Self { cell, buckets }
    }

    fn near_segment(&self, a: Point, b: Point) -> Vec<usize> {
        let (x0, x1) = (a.x.min(b.x), a.x.max(b.x));
        let (y0, y1) = (a.y.min(b.y), a.y.max(b.y));
        let i0 = ((x0 / self.cell).floor() as i64) - 1;
        let i1 = ((x1 / self.cell).floor() as i64) + 1;
        let j0 = ((y0 / self.cell).floor() as i64) - 1;
        let j1 = ((y1 / self.cell).floor() as i64) + 1;
        let mut out = Vec::new();
        for i in i0..=i1 {
            for j in j0..=j1 {
                if let Some(list) = self.buckets.get(&(i, j)) {
                    out.extend_from_slice(list);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_square_element() {
        let vertices = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        let mesh = PolytopalMesh::from_cells(vertices, vec![vec![0, 1, 2, 3]]).unwrap();
        assert_eq!(mesh.n_elements(), 1);
        assert_eq!(mesh.n_faces(), 4);
        assert!(mesh.faces.iter().all(|f| f.is_boundary()));
        assert!((mesh.element_geometry(0).area - 1.0).abs() < 1e-15);
    }

    #[test]
    fn clockwise_loop_is_reoriented() {
        let vertices = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        let mesh = PolytopalMesh::from_cells(vertices, vec![vec![0, 3, 2, 1]]).unwrap();
        assert!((mesh.element_geometry(0).area - 1.0).abs() < 1e-15);
        // Outward normals: each must point away from the centroid.
        for f in &mesh.faces {
            let c = mesh.element_geometry(0).centroid;
            assert!((f.midpoint - c).dot(&f.normal) > 0.0);
        }
    }

    #[test]
    fn hanging_node_splits_edge() {
        // Left: one 1x1 square. Right: two stacked 1x0.5 squares. The left
        // square's right edge must split into two faces.
        let vertices = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 0.5),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
            Point::new(2.0, 0.0),
            Point::new(2.0, 0.5),
            Point::new(2.0, 1.0),
        ];
        let elements = vec![
            vec![0, 1, 3, 4],
            vec![1, 5, 6, 2],
            vec![2, 6, 7, 3],
        ];
        let mesh = PolytopalMesh::from_cells(vertices, elements).unwrap();
        assert_eq!(mesh.element_faces[0].len(), 5);
        let interior = mesh.faces.iter().filter(|f| !f.is_boundary()).count();
        assert_eq!(interior, 3);
        mesh.validate().unwrap();
    }

    #[test]
    fn nonmanifold_rejected() {
        let vertices = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, -1.0),
        ];
        // Three triangles sharing the edge (0, 1).
        let elements = vec![vec![0, 1, 2], vec![0, 1, 3], vec![0, 4, 1]];
        assert!(matches!(
            PolytopalMesh::from_cells(vertices, elements),
            Err(Error::Nonmanifold(0, 1))
        ));
    }
}
