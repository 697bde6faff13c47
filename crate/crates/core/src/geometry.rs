//! Small planar geometry helpers used by the mesh and quadrature modules.

use nalgebra::{Point2, Vector2};

pub type Point = Point2<f64>;
pub type Vector = Vector2<f64>;

/// Signed area of a polygon given by its vertex loop (positive for CCW).
pub fn signed_area(loop_pts: &[Point]) -> f64 {
    let n = loop_pts.len();
    let mut a = 0.0;
    for i in 0..n {
        let p = loop_pts[i];
        let q = loop_pts[(i + 1) % n];
        a += p.x * q.y - q.x * p.y;
    }
    0.5 * a
}

/// Area centroid of a polygon (vertex loop, any orientation).
pub fn centroid(loop_pts: &[Point]) -> Point {
    let n = loop_pts.len();
    let mut cx = 0.0;
    let mut cy = 0.0;
    let mut a = 0.0;
    for i in 0..n {
        let p = loop_pts[i];
        let q = loop_pts[(i + 1) % n];
        let w = p.x * q.y - q.x * p.y;
        a += w;
        cx += (p.x + q.x) * w;
        cy += (p.y + q.y) * w;
    }
    a *= 0.5;
    Point::new(cx / (6.0 * a), cy / (6.0 * a))
}

/// Diameter of a polygon: the largest vertex-to-vertex distance.
pub fn diameter(loop_pts: &[Point]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, p) in loop_pts.iter().enumerate() {
        for q in &loop_pts[i + 1..] {
            d = d.max((q - p).norm());
        }
    }
    d
}

/// Area of the triangle (a, b, c), unsigned.
pub fn triangle_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b - a).x * (c - a).y - (c - a).x * (b - a).y).abs()
}

/// Outward unit normal of the directed segment a -> b for a CCW loop.
pub fn outward_normal(a: Point, b: Point) -> Vector {
    let t = b - a;
    Vector::new(t.y, -t.x) / t.norm()
}

/// Parameter t of the orthogonal projection of `p` on the line through a -> b,
/// scaled so that t = 0 at `a` and t = 1 at `b`.
pub fn line_parameter(a: Point, b: Point, p: Point) -> f64 {
    let ab = b - a;
    (p - a).dot(&ab) / ab.norm_squared()
}

/// Distance from `p` to the segment line through a -> b.
pub fn line_distance(a: Point, b: Point, p: Point) -> f64 {
    let ab = b - a;
    ((p - a).x * ab.y - (p - a).y * ab.x).abs() / ab.norm()
}

/// Fit of a straight line slope on (ln x, ln y) by least squares.
///
/// Used to estimate convergence rates; `pairs` holds (h, error) samples.
pub fn loglog_slope(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(h, e) in pairs {
        let x = h.ln();
        let y = e.max(1e-300).ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}
