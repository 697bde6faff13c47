//! Quadrature on segments, triangles, and star-shaped polygons.
//!
//! Polygon rules are unions of conical-product triangle rules over the fan
//! triangulation from the element star point, so the same point set serves
//! both plain element integrals and integrals of fields that are only
//! piecewise polynomial on the face-based sub-triangles.
//!
//! Non-polynomial integrands (manufactured sources, p-Laplace fluxes with
//! non-even p) are integrated with the same fixed rules; see the crate docs.

use crate::error::{Error, Result};
use crate::geometry::{triangle_area, Point, Vector};

/// Largest supported polynomial exactness for element and face rules.
pub const MAX_EXACTNESS: usize = 30;

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A rule on a 2D region: points, positive weights summing to the area.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub exactness: usize,
}

impl QuadratureRule {
    pub fn integrate(&self, f: impl Fn(Point) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Conical-product rule on the triangle (a, b, c), exact to `exactness`.
pub fn triangle_rule(a: Point, b: Point, c: Point, exactness: usize) -> Result<QuadratureRule> {
    if exactness > MAX_EXACTNESS {
        return Err(Error::UnsupportedDegree(exactness, MAX_EXACTNESS));
    }
    // Collapsed-square map (u, v) -> (u, v(1-u)) on the unit triangle: the
    // Jacobian (1-u) raises the u-degree by one.
    let nu = (exactness + 2).div_ceil(2);
    let nv = (exactness + 1).div_ceil(2).max(1);
    let (xu, wu) = gauss_legendre(nu);
    let (xv, wv) = gauss_legendre(nv);
    let area2 = 2.0 * triangle_area(a, b, c);
    let eb = b - a;
    let ec = c - a;
    let mut points = Vec::with_capacity(nu * nv);
    let mut weights = Vec::with_capacity(nu * nv);
    for (iu, &tu) in xu.iter().enumerate() {
        let u = 0.5 * (tu + 1.0);
        for (iv, &tv) in xv.iter().enumerate() {
            let v = 0.5 * (tv + 1.0);
            let (r, s) = (u, v * (1.0 - u));
            points.push(a + eb * r + ec * s);
            weights.push(0.25 * wu[iu] * wv[iv] * (1.0 - u) * area2);
        }
    }
    Ok(QuadratureRule {
        points,
        weights,
        exactness,
    })
}

/// A rule on a straight segment; `params` are normalized arclength
/// coordinates `(s - s_mid)/|F|` in [-1/2, 1/2] used to evaluate face bases.
#[derive(Debug, Clone)]
pub struct SegmentRule {
    pub points: Vec<Point>,
    pub params: Vec<f64>,
    pub weights: Vec<f64>,
    pub exactness: usize,
}

impl SegmentRule {
    pub fn integrate(&self, f: impl Fn(Point) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Gauss-Legendre rule on the segment a -> b, exact to `exactness`.
pub fn segment_rule(a: Point, b: Point, exactness: usize) -> Result<SegmentRule> {
    if exactness > MAX_EXACTNESS {
        return Err(Error::UnsupportedDegree(exactness, MAX_EXACTNESS));
    }
    let n = (exactness + 2).div_ceil(2);
    let (x, w) = gauss_legendre(n);
    let len = (b - a).norm();
    let mid = a + (b - a) * 0.5;
    let mut points = Vec::with_capacity(n);
    let mut params = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for (i, &t) in x.iter().enumerate() {
        params.push(0.5 * t);
        points.push(mid + (b - a) * (0.5 * t));
        weights.push(0.5 * w[i] * len);
    }
    Ok(SegmentRule {
        points,
        params,
        weights,
        exactness,
    })
}

/// Union of triangle rules over the fan {(base_i, star)}; one block per face.
///
/// `sub_ranges[i]` is the index range of the points lying in the i-th
/// sub-triangle, so piecewise-polynomial fields can be evaluated blockwise.
#[derive(Debug, Clone)]
pub struct CompositeRule {
    pub rule: QuadratureRule,
    pub sub_ranges: Vec<std::ops::Range<usize>>,
}

/// Rule on a star-shaped polygon given by its face segments and star point.
pub fn polygon_rule(
    star: Point,
    faces: &[(Point, Point)],
    exactness: usize,
) -> Result<CompositeRule> {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut sub_ranges = Vec::with_capacity(faces.len());
    for &(a, b) in faces {
        let tri = triangle_rule(a, b, star, exactness)?;
        let start = points.len();
        points.extend(tri.points);
        weights.extend(tri.weights);
        sub_ranges.push(start..points.len());
    }
    Ok(CompositeRule {
        rule: QuadratureRule {
            points,
            weights,
            exactness,
        },
        sub_ranges,
    })
}

/// Normal of each face as seen from the star point (pointing away from it).
pub fn fan_is_positive(star: Point, faces: &[(Point, Point)]) -> bool {
    faces
        .iter()
        .all(|&(a, b)| triangle_area(a, b, star) > 0.0)
}

/// Integrate a vector field dotted with a fixed direction over a segment rule.
pub fn integrate_flux(rule: &SegmentRule, n: Vector, f: impl Fn(Point) -> Vector) -> f64 {
    rule.points
        .iter()
        .zip(&rule.weights)
        .map(|(&x, &w)| w * f(x).dot(&n))
        .sum()
}
