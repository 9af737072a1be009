//! A posteriori verification of the equivalence between the hybrid mixed
//! solution, the conforming mixed problem, and the nonconforming
//! Crouzeix-Raviart-plus-bubble formulation.
//!
//! From `(p_h, mu_h)` an elementwise field `psi = sum_e c_e phi_e + b b_K`
//! is rebuilt with element means `p_K` and edge means `mu_e`. The nonlinear
//! projector maps `G^{-1}(grad psi)` into the broken RT0 space; its degrees
//! of freedom must equal `-u_{K,e}`, and the nonconforming residual must
//! vanish for every interior CR function and every bubble.

use std::fmt;
use std::io::Write;

use nalgebra::{Matrix4, Vector3, Vector4};

use crate::condense::{newton_dense, LocalElement, NewtonConfig};
use crate::constitutive::{g_eval, g_inverse, Vec2};
use crate::elements::{ScalarBasis, BUBBLE_MEAN, CR_MEAN};
use crate::error::{Error, Result};
use crate::globalsys::{HybridState, Problem};
use crate::mesh::{Mesh, Point};

/// Elementwise `P1 + bubble` field in the CR basis `1 - 2 lambda_i`
/// (local edge `i`) and the cubic bubble `lambda_1 lambda_2 lambda_3`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonconformingField {
    pub cr: Vec<[f64; 3]>,
    pub bubble: Vec<f64>,
}

impl NonconformingField {
    pub fn gradient(&self, elem: &LocalElement, x: Point) -> Vec2 {
        let k = elem.id;
        let mut g = elem.tri.scalar_gradient(ScalarBasis::Bubble, x);
        g = [g[0] * self.bubble[k], g[1] * self.bubble[k]];
        for i in 0..3 {
            let gi = elem.tri.scalar_gradient(ScalarBasis::CrouzeixRaviart(i), x);
            g[0] += self.cr[k][i] * gi[0];
            g[1] += self.cr[k][i] * gi[1];
        }
        g
    }

    pub fn value(&self, elem: &LocalElement, x: Point) -> f64 {
        let k = elem.id;
        let mut v = self.bubble[k] * elem.tri.scalar(ScalarBasis::Bubble, x);
        for i in 0..3 {
            v += self.cr[k][i] * elem.tri.scalar(ScalarBasis::CrouzeixRaviart(i), x);
        }
        v
    }
}

/// Moments of the local basis: rows are the three edge means and the element
/// mean, columns the three CR functions and the bubble.
fn moment_matrix() -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    for i in 0..3 {
        m[(i, i)] = 1.0;
        m[(3, i)] = CR_MEAN;
    }
    m[(3, 3)] = BUBBLE_MEAN;
    m
}

/// Field with element means `p` and edge means `mu` (all edges).
pub fn sh_inverse(mesh: &Mesh, p: &[f64], mu: &[f64]) -> Result<NonconformingField> {
    let lu = moment_matrix().lu();
    let mut cr = Vec::with_capacity(mesh.num_triangles());
    let mut bubble = Vec::with_capacity(mesh.num_triangles());
    for (k, &pk) in p.iter().enumerate() {
        let [a, b, c] = mesh.triangle_edges(k).map(|e| mu[e]);
        let x = lu
            .solve(&Vector4::new(a, b, c, pk))
            .ok_or(Error::SingularLocalJacobian(k))?;
        cr.push([x[0], x[1], x[2]]);
        bubble.push(x[3]);
    }
    Ok(NonconformingField { cr, bubble })
}

/// Element means and edge means; an edge takes its value from its first
/// triangle.
pub fn project_moments(mesh: &Mesh, field: &NonconformingField) -> (Vec<f64>, Vec<f64>) {
    let m = moment_matrix();
    let p = (0..mesh.num_triangles())
        .map(|k| {
            let c = field.cr[k];
            (m.row(3) * Vector4::new(c[0], c[1], c[2], field.bubble[k]))[0]
        })
        .collect();
    let mu = (0..mesh.num_edges())
        .map(|e| {
            let (k, _) = mesh.edge_triangles(e);
            field.cr[k][mesh.local_index(k, e).expect("edge belongs to its triangle")]
        })
        .collect();
    (p, mu)
}

/// RT0 degrees of freedom `v` with `a_K(v, w_e) = int_K G(w) . w_e` for all
/// three local edges.
pub fn nonlinear_projection(elem: &LocalElement, w: impl Fn(Point) -> Vec2) -> Result<[f64; 3]> {
    let rhs = elem.flux_form_of(w);
    let scale = rhs.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let cfg = NewtonConfig {
        abs_tol: 1e-13 * scale,
        ..NewtonConfig::local()
    };
    let eval = |x: &Vector3<f64>| {
        let u = [x[0], x[1], x[2]];
        let f = elem.flux_form(&u);
        (
            Vector3::new(f[0] - rhs[0], f[1] - rhs[1], f[2] - rhs[2]),
            elem.flux_form_jacobian(&u),
        )
    };
    let (x, _) = newton_dense(Vector3::zeros(), eval, &cfg, "nonlinear projection")
        .map_err(|e| e.on_element(elem.id))?;
    Ok([x[0], x[1], x[2]])
}

/// One verified quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value <= self.tolerance
    }
}

/// Collection of checks with their maxima.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub title: &'static str,
    /// `max(|p|, |mu|, |u|, 1)` over the mesh.
    pub scale: f64,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn max_value(&self) -> f64 {
        self.checks.iter().map(|c| c.value).fold(0.0, f64::max)
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "check,value,tolerance,passed")?;
        for c in &self.checks {
            writeln!(out, "{},{:.16e},{:.16e},{}", c.name, c.value, c.tolerance, c.passed())?;
        }
        Ok(())
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} (field scale {:.3e})", self.title, self.scale)?;
        for c in &self.checks {
            let tag = if c.passed() { "ok" } else { "FAILED" };
            writeln!(f, "  {:<24} {:>12.3e}  (tol {:.1e})  {tag}", c.name, c.value, c.tolerance)?;
        }
        Ok(())
    }
}

/// Relative tolerance applied to all verification residuals.
pub const VERIFY_TOL: f64 = 1e-8;

/// `max(|p|, |mu|, |u|, 1)`.
pub fn field_scale(state: &HybridState) -> f64 {
    let m = |v: &mut dyn Iterator<Item = f64>| v.fold(0.0f64, |a, x| a.max(x.abs()));
    1f64.max(m(&mut state.p.iter().copied()))
        .max(m(&mut state.mu.iter().copied()))
        .max(m(&mut state.u.iter().flatten().copied()))
}

fn flux_continuity(mesh: &Mesh, state: &HybridState) -> f64 {
    mesh.interior_edges()
        .iter()
        .map(|&e| {
            let (k, k2) = mesh.edge_triangles(e);
            let k2 = k2.expect("interior edge has two triangles");
            let i = mesh.local_index(k, e).expect("edge belongs to its triangle");
            let j = mesh.local_index(k2, e).expect("edge belongs to its triangle");
            (state.u[k][i] + state.u[k2][j]).abs()
        })
        .fold(0.0, f64::max)
}

/// Conforming mixed residuals: flux continuity, the flux equation tested
/// with every global RT0 basis field, and the mass equation on each element.
pub fn verify_theorem22(problem: &Problem, state: &HybridState) -> Report {
    let mesh = problem.mesh();
    let scale = field_scale(state);
    let tol = VERIFY_TOL * scale;
    let mut flux_eq = vec![0.0; mesh.num_edges()];
    let mut mass: f64 = 0.0;
    for (k, elem) in problem.elements().iter().enumerate() {
        let a = elem.flux_form(&state.u[k]);
        let signs = mesh.triangle_signs(k);
        for (i, e) in mesh.triangle_edges(k).into_iter().enumerate() {
            let mut r = a[i] - state.p[k];
            if mesh.is_boundary(e) {
                r += problem.boundary()[e];
            }
            flux_eq[e] += signs[i] * r;
        }
        let m = elem.storage.eval(state.p[k]) + state.u[k].iter().sum::<f64>() - problem.source()[k];
        mass = mass.max(m.abs());
    }
    Report {
        title: "mixed formulation",
        scale,
        checks: vec![
            Check {
                name: "flux continuity",
                value: flux_continuity(mesh, state),
                tolerance: tol,
            },
            Check {
                name: "flux equation",
                value: flux_eq.iter().fold(0.0, |a: f64, v| a.max(v.abs())),
                tolerance: tol,
            },
            Check {
                name: "mass equation",
                value: mass,
                tolerance: tol,
            },
        ],
    }
}

/// Nonconforming equivalence: flux identity `u = -P(G^{-1}(grad psi))` and
/// the nonconforming residual tested with interior CR functions and bubbles.
pub fn verify_lemma32(problem: &Problem, state: &HybridState) -> Result<Report> {
    let mesh = problem.mesh();
    let scale = field_scale(state);
    let tol = VERIFY_TOL * scale;
    let field = sh_inverse(mesh, &state.p, &state.mu)?;
    let (alpha_beta, elements) = (problem.coefficients(), problem.elements());

    let mut identity: f64 = 0.0;
    let mut edge_res = vec![0.0; mesh.num_edges()];
    let mut bubble_res: f64 = 0.0;
    let mut odd: f64 = 0.0;
    for (k, elem) in elements.iter().enumerate() {
        let (a, b) = (alpha_beta.alpha[k], alpha_beta.beta[k]);
        let proj = nonlinear_projection(elem, |x| g_inverse(field.gradient(elem, x), a, b))?;
        for i in 0..3 {
            identity = identity.max((state.u[k][i] + proj[i]).abs());
        }
        // c(p, chi) and f(chi) with chi the element mean of the test function
        let mass = elem.storage.eval(state.p[k]) - problem.source()[k];
        let mut cr_int = [0.0; 3];
        let mut bub_int = 0.0;
        for (x, w) in elem.quadrature() {
            let v = elem.tri.rt0_field(&proj, x);
            let gb = elem.tri.scalar_gradient(ScalarBasis::Bubble, x);
            bub_int += w * (v[0] * gb[0] + v[1] * gb[1]);
            for (i, c) in cr_int.iter_mut().enumerate() {
                let g = elem.tri.scalar_gradient(ScalarBasis::CrouzeixRaviart(i), x);
                *c += w * (v[0] * g[0] + v[1] * g[1]);
            }
            let u = elem.tri.rt0_field(&state.u[k], x);
            let (gp, gm) = (g_eval(u, a, b), g_eval([-u[0], -u[1]], a, b));
            odd = odd.max((gp[0] + gm[0]).abs()).max((gp[1] + gm[1]).abs());
        }
        bubble_res = bubble_res.max((BUBBLE_MEAN * mass + bub_int).abs());
        for (i, e) in mesh.triangle_edges(k).into_iter().enumerate() {
            edge_res[e] += CR_MEAN * mass + cr_int[i];
        }
    }
    let cr_res = mesh
        .interior_edges()
        .iter()
        .map(|&e| edge_res[e].abs())
        .fold(0.0, f64::max);
    Ok(Report {
        title: "nonconforming equivalence",
        scale,
        checks: vec![
            Check {
                name: "G odd",
                value: odd,
                tolerance: tol,
            },
            Check {
                name: "flux identity",
                value: identity,
                tolerance: tol,
            },
            Check {
                name: "residual (CR tests)",
                value: cr_res,
                tolerance: tol,
            },
            Check {
                name: "residual (bubble tests)",
                value: bubble_res,
                tolerance: tol,
            },
        ],
    })
}

/// Mean of `psi` over triangle `k` by quadrature, used in tests of the
/// closed-form moments.
pub fn field_mean(field: &NonconformingField, elem: &LocalElement) -> f64 {
    elem.quadrature().map(|(x, w)| w * field.value(elem, x)).sum::<f64>() / elem.tri.area
}
