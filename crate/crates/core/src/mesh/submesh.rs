//! Per-element face-based simplicial submesh.
//!
//! Every element is split into the triangles spanned by its faces and a star
//! point. The star point is the centroid when the centroid sees every face
//! at orthogonal distance >= rho * h_T; otherwise the interior point
//! maximizing the minimal face distance is used (a Chebyshev-centre linear
//! program, solved by enumerating active constraint triples).

use super::PolytopalMesh;
use crate::error::{Error, Result};
use crate::geometry::{Point, Vector};

/// Default regularity parameter; violations warn but do not fail.
pub const DEFAULT_RHO: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct ElementSubmesh {
    pub element: usize,
    pub star_point: Point,
    /// Orthogonal distance from the star point to each face line, in the
    /// order of `mesh.element_faces[element]`.
    pub face_distances: Vec<f64>,
    /// One triangle (a, b, star) per face; (a, b) ordered CCW for the element.
    pub triangles: Vec<[Point; 3]>,
    /// min_F d_TF / h_T, the realized regularity of this element.
    pub regularity: f64,
}

impl ElementSubmesh {
    /// Area of the sub-triangle attached to local face `i`.
    pub fn triangle_area(&self, i: usize) -> f64 {
        crate::geometry::triangle_area(
            self.triangles[i][0],
            self.triangles[i][1],
            self.triangles[i][2],
        )
    }
}

/// Build the submesh of one element; see the module docs for the star rule.
pub fn build_submesh(mesh: &PolytopalMesh, element: usize, rho: f64) -> Result<ElementSubmesh> {
    let geo = mesh.element_geometry(element);
    let faces = &mesh.element_faces[element];
    // Half-plane data: outward normal and a point on each face.
    let planes: Vec<(Vector, Point)> = faces
        .iter()
        .map(|&f| (mesh.faces[f].outward_normal(element), mesh.faces[f].midpoint))
        .collect();
    let distance = |x: Point| -> f64 {
        planes
            .iter()
            .map(|(n, p)| (p - x).dot(n))
            .fold(f64::INFINITY, f64::min)
    };
    let centroid = geo.centroid;
    let star = if distance(centroid) >= rho * geo.diameter {
        centroid
    } else {
        let (cheb, clearance) = chebyshev_point(&planes)
            .ok_or(Error::StarShape(element))?;
        if clearance <= 0.0 {
            return Err(Error::StarShape(element));
        }
        // Keep the better of the two candidates.
        if distance(centroid) >= clearance {
            centroid
        } else {
            cheb
        }
    };
    let face_distances: Vec<f64> = planes.iter().map(|(n, p)| (p - star).dot(n)).collect();
    let min_d = face_distances.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if min_d <= 0.0 {
        return Err(Error::StarShape(element));
    }
    let regularity = min_d / geo.diameter;
    if regularity < rho {
        log::warn!(
            "element {element}: min face distance {:.3e} below rho*h = {:.3e}",
            min_d,
            rho * geo.diameter
        );
    }
    let triangles = faces
        .iter()
        .map(|&f| {
            let (a, b) = mesh.face_points_from(f, element);
            [a, b, star]
        })
        .collect();
    Ok(ElementSubmesh {
        element,
        star_point: star,
        face_distances,
        triangles,
        regularity,
    })
}

/// Chebyshev centre of the intersection of half-planes {x : n.(x - p) <= 0}:
/// maximize r subject to n_i.x + r <= n_i.p_i. The optimum has up to three
/// active constraints; enumerate triples and keep the best feasible point.
fn chebyshev_point(planes: &[(Vector, Point)]) -> Option<(Point, f64)> {
    let m = planes.len();
    let b: Vec<f64> = planes.iter().map(|(n, p)| n.dot(&p.coords)).collect();
    let feasible = |x: Point, r: f64| -> bool {
        planes
            .iter()
            .zip(&b)
            .all(|((n, _), &bi)| n.dot(&x.coords) + r <= bi + 1e-12)
    };
    let mut best: Option<(Point, f64)> = None;
    for i in 0..m {
        for j in i + 1..m {
            for k in j + 1..m {
                let a = nalgebra::Matrix3::new(
                    planes[i].0.x, planes[i].0.y, 1.0,
                    planes[j].0.x, planes[j].0.y, 1.0,
                    planes[k].0.x, planes[k].0.y, 1.0,
                );
                let rhs = nalgebra::Vector3::new(b[i], b[j], b[k]);
                let Some(sol) = a.lu().solve(&rhs) else {
                    continue;
                };
                let x = Point::new(sol.x, sol.y);
                let r = sol.z;
                if feasible(x, r) && best.as_ref().is_none_or(|&(_, br)| r > br) {
                    best = Some((x, r));
                }
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{MeshFamily, MeshFamilySpec};

    #[test]
    fn unit_square_submesh() {
        let vertices = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        let mesh = PolytopalMesh::from_cells(vertices, vec![vec![0, 1, 2, 3]]).unwrap();
        let sub = build_submesh(&mesh, 0, DEFAULT_RHO).unwrap();
        assert!((sub.star_point - Point::new(0.5, 0.5)).norm() < 1e-15);
        for i in 0..4 {
            assert!((sub.triangle_area(i) - 0.25).abs() < 1e-15);
            assert!((sub.face_distances[i] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn regular_hexagon_submesh() {
        let v: Vec<Point> = (0..6)
            .map(|i| {
                let t = std::f64::consts::PI / 3.0 * i as f64;
                Point::new(t.cos(), t.sin())
            })
            .collect();
        let area = crate::geometry::signed_area(&v);
        let mesh = PolytopalMesh::from_cells(v, vec![(0..6).collect()]).unwrap();
        let sub = build_submesh(&mesh, 0, DEFAULT_RHO).unwrap();
        let sum: f64 = (0..6).map(|i| sub.triangle_area(i)).sum();
        assert!((sum - area).abs() < 1e-14);
        for i in 1..6 {
            assert!((sub.triangle_area(i) - sub.triangle_area(0)).abs() < 1e-14);
        }
    }

    #[test]
    fn thin_trapezoid_falls_back_to_chebyshev() {
        // Long thin trapezoid: the centroid sits close to the long sides, so
        // with a strict rho the Chebyshev point must do at least as well.
        let vertices = vec![
            Point::new(0.0, 0.0),
            Point::new(4.0, 0.0),
            Point::new(3.9, 0.4),
            Point::new(0.1, 0.4),
        ];
        let mesh = PolytopalMesh::from_cells(vertices, vec![vec![0, 1, 2, 3]]).unwrap();
        let sub = build_submesh(&mesh, 0, 0.3).unwrap();
        let geo = mesh.element_geometry(0);
        let centroid_min = mesh.element_faces[0]
            .iter()
            .map(|&f| {
                let face = &mesh.faces[f];
                (face.midpoint - geo.centroid).dot(&face.outward_normal(0))
            })
            .fold(f64::INFINITY, f64::min);
        let star_min = sub
            .face_distances
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b));
        assert!(star_min >= centroid_min - 1e-12);
        // Dense grid search oracle over interior points.
        let mut grid_best: f64 = 0.0;
        for i in 1..200 {
            for j in 1..60 {
                let p = Point::new(4.0 * i as f64 / 200.0, 0.4 * j as f64 / 60.0);
                let d = mesh.element_faces[0]
                    .iter()
                    .map(|&f| {
                        let face = &mesh.faces[f];
                        (face.midpoint - p).dot(&face.outward_normal(0))
                    })
                    .fold(f64::INFINITY, f64::min);
                grid_best = grid_best.max(d);
            }
        }
        assert!(star_min >= grid_best - 1e-3, "{star_min} vs {grid_best}");
    }

    #[test]
    fn submesh_tiles_all_families() {
        for family in MeshFamily::ALL {
            for n in 0..3 {
                let mesh = MeshFamilySpec::new(family, n).generate().unwrap();
                for t in 0..mesh.n_elements() {
                    let sub = build_submesh(&mesh, t, DEFAULT_RHO).unwrap();
                    let sum: f64 = (0..sub.triangles.len()).map(|i| sub.triangle_area(i)).sum();
                    let area = mesh.element_geometry(t).area;
                    assert!(
                        (sum - area).abs() < 1e-13 * area.max(1e-30),
                        "{family} n={n} t={t}"
                    );
                }
            }
        }
    }
}
