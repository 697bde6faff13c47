//! Built-in mesh families on the unit square.
//!
//! Each family halves the meshsize per refinement index step. The hexagonal
//! family is predominantly hexagonal with pentagons and trapezoids closing
//! the boundary; the locally refined family refines the lower-left quadrant
//! one extra level, producing hanging-node interfaces.
//!
//! Interior vertices are shifted by a fixed deterministic pseudo-random
//! fraction of the local spacing. Centrally symmetric cells (any rectangle)
//! superconverge in the consistent-gradient error measure; the jiggle breaks
//! that per-cell symmetry at every refinement level so the families exhibit
//! the generic rates.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use super::PolytopalMesh;
use crate::error::{Error, Result};
use crate::geometry::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeshFamily {
    Triangular,
    Cartesian,
    Hexagonal,
    LocallyRefined,
}

impl MeshFamily {
    pub const ALL: [MeshFamily; 4] = [
        MeshFamily::Triangular,
        MeshFamily::Cartesian,
        MeshFamily::Hexagonal,
        MeshFamily::LocallyRefined,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MeshFamily::Triangular => "triangular",
            MeshFamily::Cartesian => "cartesian",
            MeshFamily::Hexagonal => "hexagonal",
            MeshFamily::LocallyRefined => "locally_refined",
        }
    }
}

impl fmt::Display for MeshFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeshFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "triangular" => Ok(MeshFamily::Triangular),
            "cartesian" => Ok(MeshFamily::Cartesian),
            "hexagonal" => Ok(MeshFamily::Hexagonal),
            "locally_refined" | "locally-refined" => Ok(MeshFamily::LocallyRefined),
            other => Err(Error::Spec(format!("unknown mesh family '{other}'"))),
        }
    }
}

/// A family member: `refinement` starts at 0 (coarsest).
#[derive(Debug, Clone, Copy)]
pub struct MeshFamilySpec {
    pub family: MeshFamily,
    pub refinement: usize,
}

impl MeshFamilySpec {
    pub fn new(family: MeshFamily, refinement: usize) -> Self {
        Self { family, refinement }
    }

    /// Number of subdivisions per side at this refinement. The locally
    /// refined family starts one level finer so its meshsize pin (which
    /// needs an interior unrefined cell pair) exists on every level.
    fn resolution(&self) -> usize {
        match self.family {
            MeshFamily::LocallyRefined => 4usize << self.refinement,
            _ => 2usize << self.refinement,
        }
    }

    pub fn generate(&self) -> Result<PolytopalMesh> {
        let m = self.resolution();
        match self.family {
            MeshFamily::Cartesian => cartesian(m),
            MeshFamily::Triangular => triangular(m),
            MeshFamily::Hexagonal => hexagonal(m),
            MeshFamily::LocallyRefined => locally_refined(m),
        }
    }
}

/// Vertex shift amplitude as a fraction of the local spacing.
const JIGGLE: f64 = 0.28;

/// Deterministic hash to [-1, 1) (splitmix64 finalizer).
fn signed_hash(key: u64, salt: u64) -> f64 {
    let mut z = key.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    2.0 * (((z ^ (z >> 31)) >> 11) as f64 / (1u64 << 53) as f64) - 1.0
}

/// Shift an interior lattice point; boundary points stay put.
fn jiggled(ix: u64, iy: u64, x: f64, y: f64, amp: f64) -> Point {
    if x <= 0.0 || x >= 1.0 || y <= 0.0 || y >= 1.0 {
        return Point::new(x, y);
    }
    let key = ix << 24 ^ iy;
    Point::new(
        x + amp * signed_hash(key, 0x5EED_0001),
        y + amp * signed_hash(key, 0x5EED_0002),
    )
}

/// Corner of the quad-grid families. One designated interior cell is
/// stretched to the maximal diagonal, so the family meshsize halves exactly
/// under refinement instead of wobbling with the random shifts.
fn quad_corner(i: usize, j: usize, m: usize) -> Point {
    let amp = JIGGLE / m as f64;
    let x = i as f64 / m as f64;
    let y = j as f64 / m as f64;
    if m >= 4 {
        if (i, j) == (m - 2, m - 2) {
            return Point::new(x - amp, y - amp);
        }
        if (i, j) == (m - 1, m - 1) {
            return Point::new(x + amp, y + amp);
        }
    } else if (i, j) == (1, 1) {
        // Single interior vertex: stretch the first cell's diagonal by the
        // same factor as the pinned pair on finer levels.
        return Point::new(x + 2.0 * amp, y + 2.0 * amp);
    }
    jiggled(i as u64, j as u64, x, y, amp)
}

fn grid_vertices(m: usize) -> Vec<Point> {
    let mut vertices = Vec::with_capacity((m + 1) * (m + 1));
    for j in 0..=m {
        for i in 0..=m {
            vertices.push(quad_corner(i, j, m));
        }
    }
    vertices
}

fn cartesian(m: usize) -> Result<PolytopalMesh> {
    let vertices = grid_vertices(m);
    let idx = |i: usize, j: usize| j * (m + 1) + i;
    let mut elements = Vec::with_capacity(m * m);
    for j in 0..m {
        for i in 0..m {
            elements.push(vec![idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    PolytopalMesh::from_cells(vertices, elements)
}

fn triangular(m: usize) -> Result<PolytopalMesh> {
    let vertices = grid_vertices(m);
    let idx = |i: usize, j: usize| j * (m + 1) + i;
    let mut elements = Vec::with_capacity(2 * m * m);
    for j in 0..m {
        for i in 0..m {
            elements.push(vec![idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            elements.push(vec![idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    PolytopalMesh::from_cells(vertices, elements)
}

/// Hexagon lattice: columns of pitch 1/m interlocking at half-row offsets.
/// All vertices live on the exact lattice (1/(3m)) x (1/(2m)), so shared
/// vertices need no tolerance-based merging.
fn hexagonal(m: usize) -> Result<PolytopalMesh> {
    let nc = m; // columns; even, so both vertical boundaries cut on centres
    let sx = 1.0 / (3 * nc) as f64;
    let amp = 0.5 * sx;
    // Shear each odd vertex row by its own offset: hexagons lose both their
    // central symmetry and the translation invariance of the tiling, as in
    // the tilted hexagonal meshes of polytopal benchmarks.
    let row_shear = |iy: i64| {
        if iy % 2 != 0 {
            0.25 * signed_hash(iy as u64, 0x5EED_0003)
        } else {
            0.0
        }
    };
    // The first interior hexagon of column 1 gets its side spikes stretched
    // to a width dominating every shear/jiggle combination, pinning the
    // family meshsize at 5 lattice pitches exactly.
    let pin = 0.7 * sx;
    let pinned = ((1, m as i64), (5, m as i64));
    let mut vertices: Vec<Point> = Vec::new();
    let mut index: HashMap<(i64, i64), usize> = HashMap::new();
    let vid = |index: &mut HashMap<(i64, i64), usize>,
                   vertices: &mut Vec<Point>,
                   ix: i64,
                   iy: i64| {
        *index.entry((ix, iy)).or_insert_with(|| {
            let x = (ix as f64 + row_shear(iy)) / (3 * nc) as f64;
            let y = iy as f64 / (2 * m) as f64;
            let p = if (ix, iy) == pinned.0 {
                Point::new(x - pin, y)
            } else if (ix, iy) == pinned.1 {
                Point::new(x + pin, y)
            } else {
                jiggled(ix as u64, iy as u64, x, y, amp)
            };
            vertices.push(p);
            vertices.len() - 1
        })
    };
    let mut elements: Vec<Vec<usize>> = Vec::new();
    for i in 0..=nc {
        let x0 = 3 * i as i64;
        if i % 2 == 0 {
            for j in 0..m {
                let y0 = 2 * j as i64;
                let cell: Vec<(i64, i64)> = if i == 0 {
                    vec![(0, y0), (1, y0), (2, y0 + 1), (1, y0 + 2), (0, y0 + 2)]
                } else if i == nc {
                    vec![
                        (x0 - 1, y0),
                        (x0, y0),
                        (x0, y0 + 2),
                        (x0 - 1, y0 + 2),
                        (x0 - 2, y0 + 1),
                    ]
                } else {
                    vec![
                        (x0 - 2, y0 + 1),
                        (x0 - 1, y0),
                        (x0 + 1, y0),
                        (x0 + 2, y0 + 1),
                        (x0 + 1, y0 + 2),
                        (x0 - 1, y0 + 2),
                    ]
                };
                elements.push(
                    cell.into_iter()
                        .map(|(ix, iy)| vid(&mut index, &mut vertices, ix, iy))
                        .collect(),
                );
            }
        } else {
            for j in 0..=m {
                let y0 = 2 * j as i64;
                let cell: Vec<(i64, i64)> = if j == 0 {
                    vec![(x0 - 2, 0), (x0 + 2, 0), (x0 + 1, 1), (x0 - 1, 1)]
                } else if j == m {
                    vec![(x0 - 1, y0 - 1), (x0 + 1, y0 - 1), (x0 + 2, y0), (x0 - 2, y0)]
                } else {
                    vec![
                        (x0 - 2, y0),
                        (x0 - 1, y0 - 1),
                        (x0 + 1, y0 - 1),
                        (x0 + 2, y0),
                        (x0 + 1, y0 + 1),
                        (x0 - 1, y0 + 1),
                    ]
                };
                elements.push(
                    cell.into_iter()
                        .map(|(ix, iy)| vid(&mut index, &mut vertices, ix, iy))
                        .collect(),
                );
            }
        }
    }
    PolytopalMesh::from_cells(vertices, elements)
}

/// Cartesian m x m grid with the lower-left quadrant refined one extra level.
/// Coarse cells adjacent to the quadrant get hanging nodes on their edges.
fn locally_refined(m: usize) -> Result<PolytopalMesh> {
    // Fine lattice indices run at twice the coarse resolution. Hanging
    // vertices are exact midpoints of (jiggled) coarse edges, so they stay
    // collinear with them; cell centres average the four corners. The pinned
    // cell of `quad_corner` lies outside the refined quadrant.
    let corner = |i: usize, j: usize| -> Point { quad_corner(i, j, m) };
    let position = |ix: usize, iy: usize| -> Point {
        let (i, j) = (ix / 2, iy / 2);
        match (ix % 2, iy % 2) {
            (0, 0) => corner(i, j),
            (1, 0) => Point::from((corner(i, j).coords + corner(i + 1, j).coords) / 2.0),
            (0, 1) => Point::from((corner(i, j).coords + corner(i, j + 1).coords) / 2.0),
            _ => Point::from(
                (corner(i, j).coords
                    + corner(i + 1, j).coords
                    + corner(i, j + 1).coords
                    + corner(i + 1, j + 1).coords)
                    / 4.0,
            ),
        }
    };
    let mut vertices: Vec<Point> = Vec::new();
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let vid = |index: &mut HashMap<(usize, usize), usize>,
                   vertices: &mut Vec<Point>,
                   ix: usize,
                   iy: usize| {
        *index.entry((ix, iy)).or_insert_with(|| {
            vertices.push(position(ix, iy));
            vertices.len() - 1
        })
    };
    let mut elements: Vec<Vec<usize>> = Vec::new();
    let half = m / 2;
    for j in 0..m {
        for i in 0..m {
            if i < half && j < half {
                // refined: four fine squares
                for fj in 0..2 {
                    for fi in 0..2 {
                        let x = 2 * i + fi;
                        let y = 2 * j + fj;
                        elements.push(vec![
                            vid(&mut index, &mut vertices, x, y),
                            vid(&mut index, &mut vertices, x + 1, y),
                            vid(&mut index, &mut vertices, x + 1, y + 1),
                            vid(&mut index, &mut vertices, x, y + 1),
                        ]);
                    }
                }
            } else {
                let (x, y) = (2 * i, 2 * j);
                elements.push(vec![
                    vid(&mut index, &mut vertices, x, y),
                    vid(&mut index, &mut vertices, x + 2, y),
                    vid(&mut index, &mut vertices, x + 2, y + 2),
                    vid(&mut index, &mut vertices, x, y + 2),
                ]);
            }
        }
    }
    PolytopalMesh::from_cells(vertices, elements)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cartesian_counts() {
        let mesh = MeshFamilySpec::new(MeshFamily::Cartesian, 0).generate().unwrap();
        assert_eq!(mesh.n_elements(), 4);
        assert_eq!(mesh.n_faces(), 12);
        assert_eq!(mesh.n_vertices(), 9);
    }

    #[test]
    fn triangular_counts() {
        let mesh = MeshFamilySpec::new(MeshFamily::Triangular, 0).generate().unwrap();
        assert_eq!(mesh.n_elements(), 8);
        assert!(mesh.element_faces.iter().all(|f| f.len() == 3));
    }

    #[test]
    fn hexagonal_covers_unit_square() {
        for n in 0..4 {
            let mesh = MeshFamilySpec::new(MeshFamily::Hexagonal, n).generate().unwrap();
            let total: f64 = (0..mesh.n_elements())
                .map(|t| mesh.element_geometry(t).area)
                .sum();
            assert!((total - 1.0).abs() < 1e-12, "n={n}: area {total}");
            let hexagons = (0..mesh.n_elements())
                .filter(|&t| mesh.elements[t].len() == 6)
                .count();
            // Boundary closures scale like the perimeter, so hexagons
            // dominate once the resolution is past the coarsest levels.
            if n >= 2 {
                assert!(hexagons * 2 > mesh.n_elements(), "predominantly hexagonal");
            }
        }
    }

    #[test]
    fn locally_refined_has_hanging_nodes() {
        let mesh = MeshFamilySpec::new(MeshFamily::LocallyRefined, 1).generate().unwrap();
        // Pair up geometric edges: collect the distinct loop-edge segments and
        // drop every segment contained in a longer collinear one. A matching
        // mesh has exactly one face per surviving segment; hanging nodes make
        // the face count strictly larger.
        let mut segments: Vec<(usize, usize)> = {
            let mut set = std::collections::HashSet::new();
            for loop_ids in &mesh.elements {
                for i in 0..loop_ids.len() {
                    let a = loop_ids[i];
                    let b = loop_ids[(i + 1) % loop_ids.len()];
                    set.insert((a.min(b), a.max(b)));
                }
            }
            set.into_iter().collect()
        };
        segments.sort_unstable();
        let on_segment = |(a, b): (usize, usize), v: usize| {
            let (pa, pb, pv) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[v]);
            crate::geometry::line_distance(pa, pb, pv) < 1e-12
                && (-1e-12..=1.0 + 1e-12).contains(&crate::geometry::line_parameter(pa, pb, pv))
        };
        let geometric_edges = segments
            .iter()
            .filter(|&&(a, b)| {
                !segments
                    .iter()
                    .any(|&(c, d)| (c, d) != (a, b) && on_segment((c, d), a) && on_segment((c, d), b))
            })
            .count();
        assert!(
            mesh.n_faces() > geometric_edges,
            "{} faces vs {geometric_edges} geometric edges",
            mesh.n_faces()
        );
        // At least one element owns more faces than loop edges.
        assert!((0..mesh.n_elements())
            .any(|t| mesh.element_faces[t].len() > mesh.elements[t].len()));
    }

    #[test]
    fn refinement_halves_h() {
        for family in MeshFamily::ALL {
            let mut prev = None;
            for n in 0..4 {
                let mesh = MeshFamilySpec::new(family, n).generate().unwrap();
                if let Some(ph) = prev {
                    let ratio = mesh.h / ph;
                    assert!(
                        (0.4..=0.6).contains(&ratio),
                        "{family} n={n}: ratio {ratio}"
                    );
                }
                prev = Some(mesh.h);
            }
        }
    }

    #[test]
    fn all_families_pass_validation() {
        for family in MeshFamily::ALL {
            for n in 0..3 {
                MeshFamilySpec::new(family, n)
                    .generate()
                    .unwrap_or_else(|e| panic!("{family} n={n}: {e}"));
            }
        }
    }
}
