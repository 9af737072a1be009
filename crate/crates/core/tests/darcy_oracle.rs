//! For beta = 0 the local problems are linear, so the flux-only Jacobian can
//! be assembled by hand from the exact RT0 mass matrix.

use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hybrid_mixed::condense::Variant;
use hybrid_mixed::constitutive::Coefficients;
use hybrid_mixed::globalsys::Problem;
use hybrid_mixed::mesh::{Mesh, Rect};

/// `int_K w_i . w_j` with `w_i = (x - a_i) / (2|K|)`, from the centroid and
/// the second moment `int (x-c)(x-c)^T = |K|/12 sum_m (v_m-c)(v_m-c)^T`.
fn exact_mass(v: &[[f64; 2]; 3]) -> Matrix3<f64> {
    let area = 0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]));
    let c = [(v[0][0] + v[1][0] + v[2][0]) / 3.0, (v[0][1] + v[1][1] + v[2][1]) / 3.0];
    let spread: f64 = v.iter().map(|p| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sum::<f64>() / 12.0;
    Matrix3::from_fn(|i, j| {
        let dot = (c[0] - v[i][0]) * (c[0] - v[j][0]) + (c[1] - v[i][1]) * (c[1] - v[j][1]);
        area * (dot + spread) / (4.0 * area * area)
    })
}

fn check(n: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mesh = Arc::new(Mesh::structured(n, Rect::UNIT).unwrap());
    let nt = mesh.num_triangles();
    let (alpha, gamma, phi, dt) = (1.7, 0.8, 0.4, 0.25);
    let coeffs = Coefficients::uniform(nt, alpha, 0.0, gamma, phi, dt).unwrap();
    let problem = Problem::new(mesh.clone(), coeffs, Variant::FluxOnly).unwrap();

    let mut state = problem.zero_state();
    let x: Vec<f64> = (0..problem.dofs().len()).map(|_| rng.random_range(1.0..3.0)).collect();
    problem.set_unknowns(&mut state, &x);
    problem.solve_locals(&mut state).unwrap();
    let got = problem.assemble_jacobian(&state).unwrap().to_dense();

    let dim = problem.dofs().len();
    let mut want = vec![vec![0.0; dim]; dim];
    let one = Vector3::repeat(1.0);
    for k in 0..nt {
        let v = mesh.triangles()[k].map(|i| mesh.vertices()[i]);
        let ainv = (alpha * exact_mass(&v)).try_inverse().unwrap();
        // u = A^{-1} (p 1 - mu), residual row sums of u
        let du_dp = ainv * one;
        let s = phi * gamma * mesh.area(k) / dt;
        want[k][k] += du_dp.sum() + s / (2.0 * state.p[k].abs().sqrt());
        let dofs = mesh.triangle_edges(k).map(|e| problem.dofs().edge_dof[e]);
        for i in 0..3 {
            let Some(di) = dofs[i] else { continue };
            want[di][k] += du_dp[i];
            want[k][di] -= ainv.column(i).sum();
            for j in 0..3 {
                if let Some(dj) = dofs[j] {
                    want[di][dj] -= ainv[(i, j)];
                }
            }
        }
    }
    for i in 0..dim {
        for j in 0..dim {
            let scale = want[i][j].abs().max(1.0);
            assert!(
                (got[i][j] - want[i][j]).abs() <= 1e-11 * scale,
                "n={n} entry ({i},{j}): {} vs {}",
                got[i][j],
                want[i][j]
            );
        }
    }
}

#[test]
fn linear_jacobian_matches_hand_assembly_single_square() {
    check(1, 1);
}

#[test]
fn linear_jacobian_matches_hand_assembly_n2() {
    check(2, 2);
}

#[test]
fn uniform_pressure_with_balancing_source_has_zero_flux() {
    let mesh = Arc::new(Mesh::structured(3, Rect::UNIT).unwrap());
    let coeffs = Coefficients::uniform(mesh.num_triangles(), 1.0, 0.0, 1.0, 1.0, 1.0).unwrap();
    let mut problem = Problem::new(mesh, coeffs, Variant::ClosedForm).unwrap();
    problem.set_boundary_fn(|_| 4.0);
    let sum_c: Vec<f64> = problem.elements().iter().map(|e| e.storage.eval(4.0)).collect();
    problem.set_source(sum_c).unwrap();
    let mut s = problem.zero_state();
    problem.newton_solve(&mut s).unwrap();
    for &p in &s.p {
        assert!((p - 4.0).abs() < 1e-10, "{p}");
    }
    for u in &s.u {
        assert!(u.iter().all(|v| v.abs() < 1e-10));
    }
}
