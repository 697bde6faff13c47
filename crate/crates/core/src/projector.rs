//! L2-orthogonal and elliptic projections onto local polynomial spaces.
//!
//! The L2 projector solves the Gram system (pi v - v, w) = 0; the elliptic
//! projector matches gradients against all test gradients and fixes the
//! additive constant through the mean. Both are quadrature-based, and the
//! elliptic right-hand side is rewritten through integration by parts so
//! only values of the projected function are needed.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::basis::{weighted_gram, weighted_moments, ScaledBasis1d, ScaledBasis2d};
use crate::error::{Error, Result};
use crate::geometry::{Point, Vector};
use crate::quadrature::{QuadratureRule, SegmentRule};

/// Factored L2 projector onto a 2D basis for a fixed rule.
pub struct L2Projector2d {
    pub phi: DMatrix<f64>,
    weights: Vec<f64>,
    factor: Option<Cholesky<f64, Dyn>>,
}

impl L2Projector2d {
    pub fn new(basis: &ScaledBasis2d, rule: &QuadratureRule) -> Result<Self> {
        let phi = basis.eval(&rule.points);
        let factor = if basis.dim() == 0 {
            None
        } else {
            Some(
                Cholesky::new(weighted_gram(&phi, &rule.weights)).ok_or_else(|| {
                    Error::SingularGram(format!("element Gram, degree {}", basis.degree))
                })?,
            )
        };
        Ok(Self {
            phi,
            weights: rule.weights.clone(),
            factor,
        })
    }

    /// Coefficients of the projection of a scalar function.
    pub fn project(&self, rule: &QuadratureRule, f: impl Fn(Point) -> f64) -> DVector<f64> {
        let values = DMatrix::from_iterator(
            rule.points.len(),
            1,
            rule.points.iter().map(|&p| f(p)),
        );
        self.project_values(&values).column(0).into_owned()
    }

    /// Project each column of a value table (rows follow the rule points).
    pub fn project_values(&self, values: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.factor {
            None => DMatrix::zeros(0, values.ncols()),
            Some(chol) => {
                let rhs = weighted_moments(&self.phi, &self.weights, values);
                chol.solve(&rhs)
            }
        }
    }
}

/// Factored L2 projector onto a face basis for a fixed segment rule.
pub struct L2Projector1d {
    pub phi: DMatrix<f64>,
    weights: Vec<f64>,
    factor: Option<Cholesky<f64, Dyn>>,
}

impl L2Projector1d {
    pub fn new(basis: &ScaledBasis1d, rule: &SegmentRule) -> Result<Self> {
        let phi = basis.eval(&rule.params);
        let factor = if basis.dim() == 0 {
            None
        } else {
            Some(
                Cholesky::new(weighted_gram(&phi, &rule.weights)).ok_or_else(|| {
                    Error::SingularGram(format!("face Gram, degree {}", basis.degree))
                })?,
            )
        };
        Ok(Self {
            phi,
            weights: rule.weights.clone(),
            factor,
        })
    }

    pub fn project(&self, rule: &SegmentRule, f: impl Fn(Point) -> f64) -> DVector<f64> {
        let values = DMatrix::from_iterator(
            rule.points.len(),
            1,
            rule.points.iter().map(|&p| f(p)),
        );
        self.project_values(&values).column(0).into_owned()
    }

    pub fn project_values(&self, values: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.factor {
            None => DMatrix::zeros(0, values.ncols()),
            Some(chol) => {
                let rhs = weighted_moments(&self.phi, &self.weights, values);
                chol.solve(&rhs)
            }
        }
    }
}

/// Elliptic projection of `f` onto P^degree of an element whose geometry is
/// described by the composite rule and the face rules with outward normals.
///
/// For degree 0 the gradient condition is empty and the mean is returned.
pub fn elliptic_project(
    basis: &ScaledBasis2d,
    rule: &QuadratureRule,
    face_rules: &[(SegmentRule, Vector)],
    f: impl Fn(Point) -> f64,
) -> Result<DVector<f64>> {
    let dim = basis.dim();
    assert!(dim > 0, "elliptic projection needs degree >= 0");
    let phi = basis.eval(&rule.points);
    let (gx, gy) = basis.eval_grad(&rule.points);
    let lap = basis.eval_laplacian(&rule.points);
    let area: f64 = rule.weights.iter().sum();
    let f_vol: Vec<f64> = rule.points.iter().map(|&p| f(p)).collect();
    if dim == 1 {
        let mean = rule
            .weights
            .iter()
            .zip(&f_vol)
            .map(|(&w, &v)| w * v)
            .sum::<f64>()
            / (area * phi[(0, 0)]);
        return Ok(DVector::from_element(1, mean));
    }
    // Stiffness with the mean row appended (saddle form keeps the mean exact).
    let mut sys = DMatrix::zeros(dim + 1, dim + 1);
    for i in 0..dim {
        for j in 0..dim {
            let mut s = 0.0;
            for (q, &w) in rule.weights.iter().enumerate() {
                s += w * (gx[(q, i)] * gx[(q, j)] + gy[(q, i)] * gy[(q, j)]);
            }
            sys[(i, j)] = s;
        }
        let mut mi = 0.0;
        for (q, &w) in rule.weights.iter().enumerate() {
            mi += w * phi[(q, i)];
        }
        sys[(i, dim)] = mi;
        sys[(dim, i)] = mi;
    }
    // (grad f, grad w)_T = -(f, lap w)_T + sum_F (f, grad w . n)_F
    let mut rhs = DVector::zeros(dim + 1);
    for i in 0..dim {
        let mut s = 0.0;
        for (q, &w) in rule.weights.iter().enumerate() {
            s -= w * f_vol[q] * lap[(q, i)];
        }
        for (seg, normal) in face_rules {
            let (fgx, fgy) = basis.eval_grad(&seg.points);
            for (q, &w) in seg.weights.iter().enumerate() {
                s += w * f(seg.points[q]) * (fgx[(q, i)] * normal.x + fgy[(q, i)] * normal.y);
            }
        }
        rhs[i] = s;
    }
    rhs[dim] = rule
        .weights
        .iter()
        .zip(&f_vol)
        .map(|(&w, &v)| w * v)
        .sum::<f64>();
    let sol = sys
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularGram("elliptic projection system".into()))?;
    Ok(sol.rows(0, dim).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{polygon_rule, segment_rule};

    fn unit_square(exactness: usize) -> (ScaledBasis2d, QuadratureRule, Vec<(SegmentRule, Vector)>) {
        let v = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        let faces: Vec<_> = (0..4).map(|i| (v[i], v[(i + 1) % 4])).collect();
        let rule = polygon_rule(Point::new(0.5, 0.5), &faces, exactness)
            .unwrap()
            .rule;
        let face_rules = faces
            .iter()
            .map(|&(a, b)| {
                let seg = segment_rule(a, b, exactness).unwrap();
                let t = (b - a) / (b - a).norm();
                (seg, Vector::new(t.y, -t.x))
            })
            .collect();
        let basis = ScaledBasis2d::new(Point::new(0.5, 0.5), 2.0_f64.sqrt(), 2);
        (basis, rule, face_rules)
    }

    #[test]
    fn l2_projection_fixes_polynomials() {
        let (basis, rule, _) = unit_square(10);
        let proj = L2Projector2d::new(&basis, &rule).unwrap();
        // f = 2 - x + 3y + x^2 lies in P^2.
        let f = |p: Point| 2.0 - p.x + 3.0 * p.y + p.x * p.x;
        let coeffs = proj.project(&rule, f);
        let phi = basis.eval(&rule.points);
        for (q, &p) in rule.points.iter().enumerate() {
            let v: f64 = (0..basis.dim()).map(|j| coeffs[j] * phi[(q, j)]).sum();
            assert!((v - f(p)).abs() < 1e-13);
        }
    }

    #[test]
    fn l2_mean_of_x_squared() {
        let (_, rule, _) = unit_square(10);
        let basis = ScaledBasis2d::new(Point::new(0.5, 0.5), 2.0_f64.sqrt(), 0);
        let proj = L2Projector2d::new(&basis, &rule).unwrap();
        let coeffs = proj.project(&rule, |p| p.x * p.x);
        // Constant basis function is 1, so the coefficient is the mean 1/3.
        assert!((coeffs[0] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn l2_face_projection_of_x_squared() {
        // Segment [0,1] on the x-axis: projection of x^2 on P^1 is x - 1/6.
        let a = Point::new(0.0, 0.0);
        let b = Point::new(1.0, 0.0);
        let seg = segment_rule(a, b, 10).unwrap();
        let basis = ScaledBasis1d::new(1.0, 1);
        let proj = L2Projector1d::new(&basis, &seg).unwrap();
        let coeffs = proj.project(&seg, |p| p.x * p.x);
        // Basis is (1, s) with s = x - 1/2: x - 1/6 = (1/3) + s.
        assert!((coeffs[0] - 1.0 / 3.0).abs() < 1e-14);
        assert!((coeffs[1] - 1.0).abs() < 1e-13);
    }

    #[test]
    fn elliptic_projection_fixes_polynomials() {
        let (basis, rule, face_rules) = unit_square(10);
        let f = |p: Point| 1.0 + p.x * p.y - 2.0 * p.y * p.y;
        let coeffs = elliptic_project(&basis, &rule, &face_rules, f).unwrap();
        let phi = basis.eval(&rule.points);
        for (q, &p) in rule.points.iter().enumerate() {
            let v: f64 = (0..basis.dim()).map(|j| coeffs[j] * phi[(q, j)]).sum();
            assert!((v - f(p)).abs() < 1e-12);
        }
    }

    #[test]
    fn elliptic_projection_of_x_cubed() {
        // On the unit square, the P^1 elliptic projection of x^3 is x - 1/4:
        // slope = mean of 3x^2 = 1, intercept matches the mean 1/4.
        let v = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        let faces: Vec<_> = (0..4).map(|i| (v[i], v[(i + 1) % 4])).collect();
        let rule = polygon_rule(Point::new(0.5, 0.5), &faces, 10).unwrap().rule;
        let face_rules: Vec<_> = faces
            .iter()
            .map(|&(a, b)| {
                let seg = segment_rule(a, b, 10).unwrap();
                let t = (b - a) / (b - a).norm();
                (seg, Vector::new(t.y, -t.x))
            })
            .collect();
        let basis = ScaledBasis2d::new(Point::new(0.5, 0.5), 2.0_f64.sqrt(), 1);
        let coeffs = elliptic_project(&basis, &rule, &face_rules, |p| p.x.powi(3)).unwrap();
        let check = [Point::new(0.2, 0.7), Point::new(0.9, 0.1)];
        let phi = basis.eval(&check);
        for (q, &p) in check.iter().enumerate() {
            let v: f64 = (0..basis.dim()).map(|j| coeffs[j] * phi[(q, j)]).sum();
            assert!((v - (p.x - 0.25)).abs() < 1e-12);
        }
    }
}
