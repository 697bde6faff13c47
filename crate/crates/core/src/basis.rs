//! Scaled monomial bases on 2D hosts (elements, sub-triangles) and on faces,
//! with Gram matrices and optional Gram-Cholesky orthonormalization.
//!
//! Raw monomials lose positive-definiteness in floating point around degree
//! 6-8 on stretched hosts, so orthonormalization is switched on by default
//! from degree 3 upward.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::quadrature::{QuadratureRule, SegmentRule};

/// Degree from which bases are orthonormalized by default.
pub const ORTHONORMALIZE_FROM: i32 = 3;

/// Dimension of the 2D polynomial space of total degree `l` (0 for l = -1).
pub fn poly2_dim(l: i32) -> usize {
    if l < 0 {
        0
    } else {
        ((l + 1) * (l + 2) / 2) as usize
    }
}

/// Dimension of the 1D polynomial space of degree `l` (0 for l = -1).
pub fn poly1_dim(l: i32) -> usize {
    if l < 0 {
        0
    } else {
        (l + 1) as usize
    }
}

/// Basis of P^degree on a 2D host, monomials in ((x - center)/scale).
#[derive(Debug, Clone)]
pub struct ScaledBasis2d {
    pub center: Point,
    pub scale: f64,
    pub degree: i32,
    exponents: Vec<(u32, u32)>,
    /// Row i holds the monomial coefficients of working basis function i.
    ortho: Option<DMatrix<f64>>,
}

impl ScaledBasis2d {
    pub fn new(center: Point, scale: f64, degree: i32) -> Self {
        let mut exponents = Vec::with_capacity(poly2_dim(degree));
        for d in 0..=degree.max(-1) {
            for a in (0..=d).rev() {
                exponents.push((a as u32, (d - a) as u32));
            }
        }
        Self {
            center,
            scale,
            degree,
            exponents,
            ortho: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    /// Values of every basis function at `points` (rows: points).
    pub fn eval(&self, points: &[Point]) -> DMatrix<f64> {
        let raw = self.eval_monomials(points);
        match &self.ortho {
            Some(c) => raw * c.transpose(),
            None => raw,
        }
    }

    /// x- and y-derivative values at `points`.
    pub fn eval_grad(&self, points: &[Point]) -> (DMatrix<f64>, DMatrix<f64>) {
        let (gx, gy) = self.eval_monomial_grads(points);
        match &self.ortho {
            Some(c) => (&gx * c.transpose(), &gy * c.transpose()),
            None => (gx, gy),
        }
    }

    fn eval_monomials(&self, points: &[Point]) -> DMatrix<f64> {
        let n = points.len();
        let m = self.dim();
        let mut out = DMatrix::zeros(n, m);
        for (i, p) in points.iter().enumerate() {
            let xi = (p.x - self.center.x) / self.scale;
            let eta = (p.y - self.center.y) / self.scale;
            for (j, &(a, b)) in self.exponents.iter().enumerate() {
                out[(i, j)] = xi.powi(a as i32) * eta.powi(b as i32);
            }
        }
        out
    }

    /// Laplacian values at `points`.
    pub fn eval_laplacian(&self, points: &[Point]) -> DMatrix<f64> {
        let n = points.len();
        let m = self.dim();
        let mut out = DMatrix::zeros(n, m);
        let s2 = self.scale * self.scale;
        for (i, p) in points.iter().enumerate() {
            let xi = (p.x - self.center.x) / self.scale;
            let eta = (p.y - self.center.y) / self.scale;
            for (j, &(a, b)) in self.exponents.iter().enumerate() {
                let mut v = 0.0;
                if a >= 2 {
                    v += (a * (a - 1)) as f64 * xi.powi(a as i32 - 2) * eta.powi(b as i32);
                }
                if b >= 2 {
                    v += (b * (b - 1)) as f64 * xi.powi(a as i32) * eta.powi(b as i32 - 2);
                }
                out[(i, j)] = v / s2;
            }
        }
        match &self.ortho {
            Some(c) => out * c.transpose(),
            None => out,
        }
    }

    fn eval_monomial_grads(&self, points: &[Point]) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = points.len();
        let m = self.dim();
        let mut gx = DMatrix::zeros(n, m);
        let mut gy = DMatrix::zeros(n, m);
        for (i, p) in points.iter().enumerate() {
            let xi = (p.x - self.center.x) / self.scale;
            let eta = (p.y - self.center.y) / self.scale;
            for (j, &(a, b)) in self.exponents.iter().enumerate() {
                if a > 0 {
                    gx[(i, j)] =
                        a as f64 * xi.powi(a as i32 - 1) * eta.powi(b as i32) / self.scale;
                }
                if b > 0 {
                    gy[(i, j)] =
                        b as f64 * xi.powi(a as i32) * eta.powi(b as i32 - 1) / self.scale;
                }
            }
        }
        (gx, gy)
    }

    /// Gram matrix of the working basis under the given rule.
    pub fn gram(&self, rule: &QuadratureRule) -> DMatrix<f64> {
        let phi = self.eval(&rule.points);
        weighted_gram(&phi, &rule.weights)
    }

    /// Replace the working basis by its Gram-Cholesky orthonormalization.
    pub fn orthonormalize(&mut self, rule: &QuadratureRule) -> Result<()> {
        if self.dim() == 0 {
            return Ok(());
        }
        let g = self.gram(rule);
        let chol = Cholesky::new(g)
            .ok_or_else(|| Error::SingularGram(format!("degree {} basis", self.degree)))?;
        let l_inv = invert_lower(chol.l());
        self.ortho = Some(match self.ortho.take() {
            Some(c) => l_inv * c,
            None => l_inv,
        });
        Ok(())
    }

    /// 2-norm condition number of the Gram matrix.
    pub fn gram_condition(&self, rule: &QuadratureRule) -> f64 {
        if self.dim() == 0 {
            return 1.0;
        }
        let eig = self.gram(rule).symmetric_eigen();
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        max / min.max(f64::MIN_POSITIVE)
    }
}

/// Basis of P^degree on a face, 1D monomials in the normalized arclength
/// coordinate (shared by both adjacent elements).
#[derive(Debug, Clone)]
pub struct ScaledBasis1d {
    pub degree: i32,
    pub length: f64,
    ortho: Option<DMatrix<f64>>,
}

impl ScaledBasis1d {
    pub fn new(length: f64, degree: i32) -> Self {
        Self {
            degree,
            length,
            ortho: None,
        }
    }

    pub fn dim(&self) -> usize {
        poly1_dim(self.degree)
    }

    /// Values at normalized parameters in [-1/2, 1/2].
    pub fn eval(&self, params: &[f64]) -> DMatrix<f64> {
        let n = params.len();
        let m = self.dim();
        let mut out = DMatrix::zeros(n, m);
        for (i, &s) in params.iter().enumerate() {
            for j in 0..m {
                out[(i, j)] = s.powi(j as i32);
            }
        }
        match &self.ortho {
            Some(c) => out * c.transpose(),
            None => out,
        }
    }

    pub fn gram(&self, rule: &SegmentRule) -> DMatrix<f64> {
        let phi = self.eval(&rule.params);
        weighted_gram(&phi, &rule.weights)
    }

    pub fn orthonormalize(&mut self, rule: &SegmentRule) -> Result<()> {
        if self.dim() == 0 {
            return Ok(());
        }
        let g = self.gram(rule);
        let chol = Cholesky::new(g)
            .ok_or_else(|| Error::SingularGram(format!("degree {} face basis", self.degree)))?;
        let l_inv = invert_lower(chol.l());
        self.ortho = Some(match self.ortho.take() {
            Some(c) => l_inv * c,
            None => l_inv,
        });
        Ok(())
    }
}

/// phi^T diag(w) phi for a value table (rows: points).
pub fn weighted_gram(phi: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let mut scaled = phi.clone();
    for (i, &w) in weights.iter().enumerate() {
        scaled.row_mut(i).scale_mut(w);
    }
    phi.transpose() * scaled
}

/// phi^T diag(w) values, the right-hand side of an L2 projection.
pub fn weighted_moments(phi: &DMatrix<f64>, weights: &[f64], values: &DMatrix<f64>) -> DMatrix<f64> {
    let mut scaled = values.clone();
    for (i, &w) in weights.iter().enumerate() {
        scaled.row_mut(i).scale_mut(w);
    }
    phi.transpose() * scaled
}

fn invert_lower(l: nalgebra::OMatrix<f64, Dyn, Dyn>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut inv = DMatrix::identity(n, n);
    for col in 0..n {
        for i in 0..n {
            let mut s = inv[(i, col)];
            for k in 0..i {
                s -= l[(i, k)] * inv[(k, col)];
            }
            inv[(i, col)] = s / l[(i, i)];
        }
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{polygon_rule, segment_rule};

    fn unit_square_rule(exactness: usize) -> QuadratureRule {
        let v = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        let faces: Vec<_> = (0..4).map(|i| (v[i], v[(i + 1) % 4])).collect();
        polygon_rule(Point::new(0.5, 0.5), &faces, exactness)
            .unwrap()
            .rule
    }

    #[test]
    fn dims() {
        assert_eq!(poly2_dim(-1), 0);
        assert_eq!(poly2_dim(0), 1);
        assert_eq!(poly2_dim(3), 10);
        assert_eq!(poly1_dim(-1), 0);
        assert_eq!(poly1_dim(2), 3);
    }

    #[test]
    fn orthonormalized_gram_is_identity() {
        let rule = unit_square_rule(12);
        let mut basis = ScaledBasis2d::new(Point::new(0.5, 0.5), 2.0_f64.sqrt(), 5);
        basis.orthonormalize(&rule).unwrap();
        let g = basis.gram(&rule);
        let id = DMatrix::identity(g.nrows(), g.ncols());
        assert!((g - id).abs().max() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let basis = ScaledBasis2d::new(Point::new(0.3, 0.4), 0.7, 4);
        let p = Point::new(0.55, 0.21);
        let eps = 1e-6;
        let (gx, gy) = basis.eval_grad(&[p]);
        let vxp = basis.eval(&[Point::new(p.x + eps, p.y)]);
        let vxm = basis.eval(&[Point::new(p.x - eps, p.y)]);
        let vyp = basis.eval(&[Point::new(p.x, p.y + eps)]);
        let vym = basis.eval(&[Point::new(p.x, p.y - eps)]);
        for j in 0..basis.dim() {
            let fdx = (vxp[(0, j)] - vxm[(0, j)]) / (2.0 * eps);
            let fdy = (vyp[(0, j)] - vym[(0, j)]) / (2.0 * eps);
            assert!((gx[(0, j)] - fdx).abs() < 1e-7);
            assert!((gy[(0, j)] - fdy).abs() < 1e-7);
        }
    }

    #[test]
    fn face_basis_gram_condition() {
        let a = Point::new(0.0, 0.0);
        let b = Point::new(0.5, 0.5);
        let rule = segment_rule(a, b, 10).unwrap();
        let mut basis = ScaledBasis1d::new((b - a).norm(), 4);
        basis.orthonormalize(&rule).unwrap();
        let g = basis.gram(&rule);
        // Orthonormal up to the segment measure.
        let len = (b - a).norm();
        for i in 0..basis.dim() {
            for j in 0..basis.dim() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - want).abs() < 1e-12 * len.max(1.0));
            }
        }
    }
}
