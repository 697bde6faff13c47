//! Gradient schemes: linear diffusion and the p-Laplace problem, assembled
//! from the stabilized gradient, with strong Dirichlet data, optional static
//! condensation, and a damped Newton solver with regularization
//! continuation for p < 2.

mod assembly;
mod errors;
mod newton;

pub use assembly::{assemble_linear, assemble_plaplace, AssembledSystem, LocalSystem};
pub use errors::measure_errors;
pub use newton::{newton_solve, solve_linear, NewtonOptions, NewtonReport};

use std::str::FromStr;
use std::sync::Arc;

use crate::error::Error;
use crate::geometry::{Point, Vector};
use nalgebra::Matrix2;

/// Flux nonlinearity. The p-Laplace flux with p = 2 coincides with linear
/// diffusion with identity tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluxKind {
    Linear,
    PLaplace,
}

#[derive(Clone)]
pub struct ExactSolution {
    pub value: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
    pub gradient: Arc<dyn Fn(Point) -> Vector + Send + Sync>,
}

/// Continuous problem: -div sigma(grad u) = f with Dirichlet data g.
#[derive(Clone)]
pub struct ProblemSpec {
    pub p: f64,
    pub flux: FluxKind,
    pub source: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
    pub dirichlet: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
    pub exact: Option<ExactSolution>,
}

impl ProblemSpec {
    pub fn is_linear(&self) -> bool {
        self.flux == FluxKind::Linear || self.p == 2.0
    }
}

/// Regularized p-Laplace flux (eps^2 + |g|^2)^{(p-2)/2} g.
#[inline]
pub fn flux_eval(p: f64, eps: f64, g: Vector) -> Vector {
    let s = eps * eps + g.norm_squared();
    if s == 0.0 {
        return Vector::zeros();
    }
    g * s.powf(0.5 * p - 1.0)
}

/// Exact tangent of the regularized flux.
#[inline]
pub fn flux_tangent(p: f64, eps: f64, g: Vector) -> Matrix2<f64> {
    let s = eps * eps + g.norm_squared();
    if s == 0.0 {
        return Matrix2::zeros();
    }
    let a = s.powf(0.5 * p - 1.0);
    let b = (p - 2.0) * s.powf(0.5 * p - 2.0);
    Matrix2::new(
        a + b * g.x * g.x,
        b * g.x * g.y,
        b * g.x * g.y,
        a + b * g.y * g.y,
    )
}

/// Built-in manufactured cases on the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestCase {
    /// u = sin(pi x) sin(pi y), homogeneous Dirichlet data.
    Trigonometric,
    /// u = exp(x + pi y), inhomogeneous Dirichlet data (used for p < 2,
    /// where the trigonometric solution lacks the required regularity).
    Exponential,
}

impl TestCase {
    pub fn name(&self) -> &'static str {
        match self {
            TestCase::Trigonometric => "trig",
            TestCase::Exponential => "exp",
        }
    }

    /// The p-Laplace problem manufactured from this exact solution.
    pub fn problem(&self, p: f64) -> ProblemSpec {
        let flux = if p == 2.0 {
            FluxKind::Linear
        } else {
            FluxKind::PLaplace
        };
        match self {
            TestCase::Trigonometric => {
                let value = |q: Point| (PI * q.x).sin() * (PI * q.y).sin();
                let gradient = |q: Point| {
                    Vector::new(
                        PI * (PI * q.x).cos() * (PI * q.y).sin(),
                        PI * (PI * q.x).sin() * (PI * q.y).cos(),
                    )
                };
                let source = move |q: Point| trig_source(p, q);
                ProblemSpec {
                    p,
                    flux,
                    source: Arc::new(source),
                    dirichlet: Arc::new(|_| 0.0),
                    exact: Some(ExactSolution {
                        value: Arc::new(value),
                        gradient: Arc::new(gradient),
                    }),
                }
            }
            TestCase::Exponential => {
                let value = |q: Point| (q.x + PI * q.y).exp();
                let gradient = |q: Point| {
                    let e = (q.x + PI * q.y).exp();
                    Vector::new(e, PI * e)
                };
                let source = move |q: Point| {
                    -(p - 1.0) * (1.0 + PI * PI).powf(0.5 * p) * ((p - 1.0) * (q.x + PI * q.y)).exp()
                };
                ProblemSpec {
                    p,
                    flux,
                    source: Arc::new(source),
                    dirichlet: Arc::new(value),
                    exact: Some(ExactSolution {
                        value: Arc::new(value),
                        gradient: Arc::new(gradient),
                    }),
                }
            }
        }
    }
}

impl FromStr for TestCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "trig" | "trigonometric" => Ok(TestCase::Trigonometric),
            "exp" | "exponential" => Ok(TestCase::Exponential),
            other => Err(Error::Spec(format!("unknown test case '{other}'"))),
        }
    }
}

use std::f64::consts::PI;

/// Source of the p-Laplace problem for the trigonometric solution:
/// f = -(|g|^{p-2} lap u + (p-2)|g|^{p-4} g . (H g)) with g = grad u.
fn trig_source(p: f64, q: Point) -> f64 {
    let (sx, cx) = (PI * q.x).sin_cos();
    let (sy, cy) = (PI * q.y).sin_cos();
    let gx = PI * cx * sy;
    let gy = PI * sx * cy;
    let g2 = gx * gx + gy * gy;
    let lap = -2.0 * PI * PI * sx * sy;
    if g2 < 1e-28 {
        // Critical points of u: the flux gradient vanishes for p > 2.
        return if p == 2.0 { -lap } else { 0.0 };
    }
    let hxx = -PI * PI * sx * sy;
    let hyy = hxx;
    let hxy = PI * PI * cx * cy;
    let ghg = gx * gx * hxx + 2.0 * gx * gy * hxy + gy * gy * hyy;
    -(g2.powf(0.5 * p - 1.0) * lap + (p - 2.0) * g2.powf(0.5 * p - 2.0) * ghg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flux_reduces_to_identity_for_p2() {
        let g = Vector::new(0.3, -1.2);
        let s = flux_eval(2.0, 0.0, g);
        assert!((s - g).norm() < 1e-15);
        let t = flux_tangent(2.0, 0.0, g);
        assert!((t - Matrix2::identity()).norm() < 1e-15);
    }

    #[test]
    fn flux_tangent_matches_finite_differences() {
        for (p, eps) in [(4.0, 0.0), (3.0, 1e-3), (1.75, 1e-2)] {
            let g = Vector::new(0.4, 0.7);
            let t = flux_tangent(p, eps, g);
            let h = 1e-7;
            for dir in [Vector::new(1.0, 0.0), Vector::new(0.0, 1.0)] {
                let fd = (flux_eval(p, eps, g + dir * h) - flux_eval(p, eps, g - dir * h)) / (2.0 * h);
                let an = t * dir;
                assert!((fd - an).norm() < 1e-6 * an.norm().max(1.0), "p={p}");
            }
        }
    }

    #[test]
    fn exponential_source_matches_laplacian_at_p2() {
        let prob = TestCase::Exponential.problem(2.0);
        let q = Point::new(0.3, 0.4);
        let u = (q.x + PI * q.y).exp();
        let want = -(1.0 + PI * PI) * u;
        assert!(((prob.source)(q) - want).abs() < 1e-10 * want.abs());
    }

    #[test]
    fn trig_source_is_classic_at_p2() {
        let prob = TestCase::Trigonometric.problem(2.0);
        let q = Point::new(0.21, 0.67);
        let want = 2.0 * PI * PI * (PI * q.x).sin() * (PI * q.y).sin();
        assert!(((prob.source)(q) - want).abs() < 1e-10);
    }

    #[test]
    fn trig_source_divergence_identity() {
        // f = -div sigma(grad u): check by central differences of the flux.
        for p in [3.0, 4.0] {
            let prob = TestCase::Trigonometric.problem(p);
            let q = Point::new(0.3, 0.55);
            let h = 1e-6;
            let sig = |pt: Point| {
                let g = Vector::new(
                    PI * (PI * pt.x).cos() * (PI * pt.y).sin(),
                    PI * (PI * pt.x).sin() * (PI * pt.y).cos(),
                );
                flux_eval(p, 0.0, g)
            };
            let div = (sig(Point::new(q.x + h, q.y)).x - sig(Point::new(q.x - h, q.y)).x
                + sig(Point::new(q.x, q.y + h)).y
                - sig(Point::new(q.x, q.y - h)).y)
                / (2.0 * h);
            assert!(((prob.source)(q) + div).abs() < 1e-5, "p={p}");
        }
    }
}
