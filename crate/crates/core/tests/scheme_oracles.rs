//! Solver-level oracles: dense-quadrature stiffness checks, condensation
//! consistency, Jacobian finite differences, and polynomial exactness.

use dsgd::discretization::Discretization;
use dsgd::geometry::Point;
use dsgd::mesh::{MeshFamily, MeshFamilySpec, PolytopalMesh};
use dsgd::operators::OperatorConfig;
use dsgd::scheme::{
    assemble_linear, assemble_plaplace, measure_errors, newton_solve, solve_linear, NewtonOptions,
    TestCase,
};
use dsgd::space::SpaceSpec;
use dsgd::stabilization::StabKind;
use nalgebra::DVector;

fn build(
    mesh: &PolytopalMesh,
    k: i32,
    l: i32,
    kind: StabKind,
) -> Discretization<'_> {
    let spec = SpaceSpec::new(k, l).unwrap();
    Discretization::build(mesh, spec, kind, OperatorConfig::default()).unwrap()
}

#[test]
fn single_element_stiffness_matches_dense_quadrature_oracle() {
    // 1-element unit square, k = 0, l = 0: the 5x5 local stiffness equals
    // the quadrature Gram of the stabilized gradient, and splits into
    // Gram(G) + Gram(S) by orthogonality.
    let mesh = PolytopalMesh::from_cells(
        vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ],
        vec![vec![0, 1, 2, 3]],
    )
    .unwrap();
    let disc = build(&mesh, 0, 0, StabKind::Rtn);
    let problem = TestCase::Trigonometric.problem(2.0);
    let sys = assemble_linear(&disc, &problem, false);
    let a = &sys.locals[0].matrix;
    let de = &disc.elements[0];
    let n = de.ops.n_dof;
    // Dense quadrature oracle: assemble the Gram by evaluating the scheme
    // gradient of every basis vector at every quadrature point.
    let w = &de.ops.quad.rule.weights;
    let mut oracle = nalgebra::DMatrix::zeros(n, n);
    let mut cons = nalgebra::DMatrix::zeros(n, n);
    let mut stab = nalgebra::DMatrix::zeros(n, n);
    let mut basis_vals = Vec::new();
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        let g = de.gradient_values(StabKind::Rtn, &e);
        let c = de.ops.cons_grad_values(&e);
        let s = de.stab.values_of(&de.ops, &e);
        basis_vals.push((g, c, s));
    }
    for i in 0..n {
        for j in 0..n {
            let (gi, ci, si) = &basis_vals[i];
            let (gj, cj, sj) = &basis_vals[j];
            for (q, &wq) in w.iter().enumerate() {
                oracle[(i, j)] += wq * (gi.0[q] * gj.0[q] + gi.1[q] * gj.1[q]);
                cons[(i, j)] += wq * (ci.0[q] * cj.0[q] + ci.1[q] * cj.1[q]);
                stab[(i, j)] += wq * (si.0[q] * sj.0[q] + si.1[q] * sj.1[q]);
            }
        }
    }
    let scale = a.amax();
    assert!((a - &oracle).amax() <= 1e-12 * scale);
    // Orthogonality splits the Gram.
    assert!((&oracle - (&cons + &stab)).amax() <= 1e-12 * scale);
}

#[test]
fn condensed_and_full_solves_agree() {
    let mesh = MeshFamilySpec::new(MeshFamily::Hexagonal, 1).generate().unwrap();
    for (k, l) in [(0, 0), (1, 1), (2, 1)] {
        let disc = build(&mesh, k, l, StabKind::Rtn);
        let problem = TestCase::Trigonometric.problem(2.0);
        let full = solve_linear(&disc, &problem, false).unwrap();
        let cond = solve_linear(&disc, &problem, true).unwrap();
        let scale = full.amax().max(1e-30);
        assert!(
            (&full - &cond).amax() <= 1e-10 * scale,
            "k={k} l={l}: {:.3e}",
            (&full - &cond).amax() / scale
        );
    }
}

#[test]
fn zero_source_zero_bc_gives_zero_solution() {
    let mesh = MeshFamilySpec::new(MeshFamily::Triangular, 1).generate().unwrap();
    let disc = build(&mesh, 1, 1, StabKind::Rtn);
    let mut problem = TestCase::Trigonometric.problem(2.0);
    problem.source = std::sync::Arc::new(|_| 0.0);
    let u = solve_linear(&disc, &problem, true).unwrap();
    assert!(u.amax() < 1e-12);
}

#[test]
fn polynomial_exactness_of_linear_scheme() {
    // Manufactured global polynomial of degree k+1 with matching Dirichlet
    // data: the scheme reproduces it up to solver tolerance.
    let mesh = MeshFamilySpec::new(MeshFamily::LocallyRefined, 1).generate().unwrap();
    for (k, l) in [(0, 0), (1, 1)] {
        let disc = build(&mesh, k, l, StabKind::Rtn);
        let exact = move |q: Point| {
            let base = 0.3 + q.x - 0.5 * q.y;
            base.powi((k + 1) as i32)
        };
        // -lap u for u = base^(k+1): chain rule with |grad base|^2 = 1.25.
        let source = move |q: Point| {
            let base: f64 = 0.3 + q.x - 0.5 * q.y;
            let m = (k + 1) as f64;
            -(m * (m - 1.0)) * base.powi((k - 1).max(0) as i32) * 1.25
        };
        let problem = dsgd::scheme::ProblemSpec {
            p: 2.0,
            flux: dsgd::scheme::FluxKind::Linear,
            source: std::sync::Arc::new(source),
            dirichlet: std::sync::Arc::new(exact),
            exact: Some(dsgd::scheme::ExactSolution {
                value: std::sync::Arc::new(exact),
                gradient: std::sync::Arc::new(move |q: Point| {
                    let base: f64 = 0.3 + q.x - 0.5 * q.y;
                    let m = (k + 1) as f64;
                    dsgd::geometry::Vector::new(1.0, -0.5) * (m * base.powi(k as i32))
                }),
            }),
        };
        let u = solve_linear(&disc, &problem, true).unwrap();
        let (err_grad, _) = measure_errors(&disc, &u, problem.exact.as_ref().unwrap(), 2.0);
        assert!(err_grad <= 1e-9, "k={k}: err {err_grad:.3e}");
        // Interpolant reproduces itself: gradient error of I_h u is zero.
        let iu = disc.interpolate(exact);
        let (gi, _) = measure_errors(&disc, &iu, problem.exact.as_ref().unwrap(), 2.0);
        assert!(gi <= 1e-13);
    }
}

#[test]
fn plaplace_jacobian_matches_finite_differences() {
    let mesh = MeshFamilySpec::new(MeshFamily::Cartesian, 0).generate().unwrap();
    for (p, kind) in [(4.0, StabKind::Rtn), (3.0, StabKind::Rtn), (1.75, StabKind::Hho)] {
        let disc = build(&mesh, 1, 1, kind);
        let problem = TestCase::Trigonometric.problem(p);
        let n = disc.layout.total_dofs();
        let mut u = DVector::from_iterator(
            n,
            (0..n).map(|i| 0.5 + 0.3 * ((i * 7 + 1) as f64).sin()),
        );
        disc.layout.apply_zero_boundary(&mut u);
        let eps = 1e-3;
        let sys = assemble_plaplace(&disc, &problem, &u, eps, false);
        // Compare the Jacobian-vector product of element 0 against central
        // finite differences of the local residual.
        let t = 0;
        let local = &sys.locals[t];
        let nloc = local.matrix.nrows();
        let u_loc = disc.local_vector(t, &u);
        let step = 1e-6 * u_loc.amax().max(1.0);
        for j in 0..nloc {
            let mut up = u_loc.clone();
            let mut um = u_loc.clone();
            up[j] += step;
            um[j] -= step;
            let rp = local_residual(&disc, t, &problem, &up, eps);
            let rm = local_residual(&disc, t, &problem, &um, eps);
            for i in 0..nloc {
                let fd = (rp[i] - rm[i]) / (2.0 * step);
                let an = local.matrix[(i, j)];
                assert!(
                    (fd - an).abs() <= 1e-6 * an.abs().max(1.0),
                    "p={p} ({i},{j}): {fd} vs {an}"
                );
            }
        }
        // Symmetry of the exact tangent.
        let s = &local.matrix - local.matrix.transpose();
        assert!(s.amax() <= 1e-12 * local.matrix.amax());
    }
}

/// Local residual via the public assembly path at a shifted local vector.
fn local_residual(
    disc: &Discretization<'_>,
    t: usize,
    problem: &dsgd::scheme::ProblemSpec,
    u_local: &DVector<f64>,
    eps: f64,
) -> DVector<f64> {
    // Embed the local vector into a global one; only element t's residual
    // is read back, so other elements are irrelevant.
    let mut u = disc.layout.zero_vector();
    let ne = disc.spec.elem_dim();
    for (i, gi) in disc.layout.elem_block(t).enumerate() {
        u[gi] = u_local[i];
    }
    for (fi, &f) in disc.elements[t].ops.faces.iter().enumerate() {
        for (m, gi) in disc.layout.face_block(f).enumerate() {
            u[gi] = u_local[ne + fi * disc.spec.face_dim() + m];
        }
    }
    let sys = assemble_plaplace(disc, problem, &u, eps, false);
    sys.locals[t].residual.clone()
}

#[test]
fn p2_newton_converges_in_one_iteration() {
    let mesh = MeshFamilySpec::new(MeshFamily::Cartesian, 1).generate().unwrap();
    let disc = build(&mesh, 1, 1, StabKind::Rtn);
    let problem = TestCase::Trigonometric.problem(2.0);
    let (_, report) = newton_solve(&disc, &problem, None, NewtonOptions::default()).unwrap();
    assert!(report.converged);
    assert_eq!(report.iterations, 1);
}

#[test]
fn p4_newton_converges_on_coarse_mesh() {
    let mesh = MeshFamilySpec::new(MeshFamily::Triangular, 1).generate().unwrap();
    let disc = build(&mesh, 0, 0, StabKind::Rtn);
    let problem = TestCase::Trigonometric.problem(4.0);
    let (u, report) = newton_solve(&disc, &problem, None, NewtonOptions::default()).unwrap();
    assert!(report.converged, "residual {:.3e}", report.final_residual);
    // Accepted residuals decrease monotonically (single stage for p >= 2).
    for w in report.residual_norms.windows(2) {
        assert!(w[1] < w[0]);
    }
    let (err_grad, err_pot) = measure_errors(&disc, &u, problem.exact.as_ref().unwrap(), 4.0);
    assert!(err_grad < 1.0 && err_pot < 1.0);
}

#[test]
fn p_less_than_two_newton_converges() {
    let mesh = MeshFamilySpec::new(MeshFamily::Cartesian, 1).generate().unwrap();
    let disc = build(&mesh, 0, 0, StabKind::Rtn);
    let problem = TestCase::Exponential.problem(1.75);
    let (u, report) = newton_solve(&disc, &problem, None, NewtonOptions::default()).unwrap();
    assert!(report.converged, "residual {:.3e}", report.final_residual);
    assert_eq!(report.eps_schedule, vec![1e-2, 1e-4, 1e-6, 1e-10]);
    let (err_grad, _) = measure_errors(&disc, &u, problem.exact.as_ref().unwrap(), 1.75);
    assert!(err_grad.is_finite() && err_grad > 0.0);
}
