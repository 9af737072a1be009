//! Manufactured-solution convergence study.
//!
//! For a smooth positive `p*` the flux is `u* = -G^{-1}(grad p*)` and the
//! source `f* = R(p*) + div u*`. Writing `u* = -s(t) grad p*` with
//! `t = |grad p*|` and `s(t) = 2 / (alpha + sqrt(alpha^2 + 4 beta t))`,
//!
//! ```text
//! div u* = -( s(t) lap p* + s'(t) (grad p*)^T H (grad p*) / t )
//! ```
//!
//! with `H` the Hessian of `p*`.

use std::fmt;
use std::sync::Arc;

use crate::condense::Variant;
use crate::constitutive::{signed_sqrt, Coefficients, Vec2};
use crate::elements::{edge_mean, QuadratureRule, Triangle, DEFAULT_DEGREE};
use crate::error::Result;
use crate::globalsys::{recover_fields, Problem};
use crate::mesh::{Mesh, Point, Rect};

/// Closed-form exact pressures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exact {
    /// `1 + x^2 + y^2`.
    Quadratic,
    /// `2 + sin(pi x) cos(pi y) / 2`.
    Trig,
}

impl Exact {
    pub fn p(self, x: Point) -> f64 {
        match self {
            Exact::Quadratic => 1.0 + x[0] * x[0] + x[1] * x[1],
            Exact::Trig => 2.0 + 0.5 * (PI * x[0]).sin() * (PI * x[1]).cos(),
        }
    }

    pub fn grad(self, x: Point) -> Vec2 {
        match self {
            Exact::Quadratic => [2.0 * x[0], 2.0 * x[1]],
            Exact::Trig => {
                let (sx, cx) = (PI * x[0]).sin_cos();
                let (sy, cy) = (PI * x[1]).sin_cos();
                [0.5 * PI * cx * cy, -0.5 * PI * sx * sy]
            }
        }
    }

    pub fn hessian(self, x: Point) -> [[f64; 2]; 2] {
        match self {
            Exact::Quadratic => [[2.0, 0.0], [0.0, 2.0]],
            Exact::Trig => {
                let (sx, cx) = (PI * x[0]).sin_cos();
                let (sy, cy) = (PI * x[1]).sin_cos();
                let c = 0.5 * PI * PI;
                [[-c * sx * cy, -c * cx * sy], [-c * cx * sy, -c * sx * cy]]
            }
        }
    }
}

const PI: f64 = std::f64::consts::PI;

/// A manufactured problem with uniform coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmsCase {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub porosity: f64,
    pub dt: f64,
    pub exact: Exact,
    pub variant: Variant,
}

impl MmsCase {
    /// Darcy limit: `beta = 0`, all other coefficients one.
    pub fn darcy() -> Self {
        MmsCase {
            alpha: 1.0,
            beta: 0.0,
            gamma: 1.0,
            porosity: 1.0,
            dt: 1.0,
            exact: Exact::Quadratic,
            variant: Variant::ClosedForm,
        }
    }

    pub fn forchheimer() -> Self {
        MmsCase {
            beta: 2.0,
            exact: Exact::Trig,
            ..MmsCase::darcy()
        }
    }

    fn s(&self, t: f64) -> f64 {
        2.0 / (self.alpha + (self.alpha * self.alpha + 4.0 * self.beta * t).sqrt())
    }

    fn ds(&self, t: f64) -> f64 {
        let r = (self.alpha * self.alpha + 4.0 * self.beta * t).sqrt();
        -4.0 * self.beta / (r * (self.alpha + r) * (self.alpha + r))
    }

    pub fn flux(&self, x: Point) -> Vec2 {
        let g = self.exact.grad(x);
        let s = self.s(g[0].hypot(g[1]));
        [-s * g[0], -s * g[1]]
    }

    pub fn div_flux(&self, x: Point) -> f64 {
        let g = self.exact.grad(x);
        let h = self.exact.hessian(x);
        let t = g[0].hypot(g[1]);
        let lap = h[0][0] + h[1][1];
        let mut d = self.s(t) * lap;
        if t > 0.0 {
            let ghg = g[0] * (h[0][0] * g[0] + h[0][1] * g[1]) + g[1] * (h[1][0] * g[0] + h[1][1] * g[1]);
            d += self.ds(t) * ghg / t;
        }
        -d
    }

    pub fn source(&self, x: Point) -> f64 {
        self.porosity * self.gamma / self.dt * signed_sqrt(self.exact.p(x)) + self.div_flux(x)
    }

    pub fn problem(&self, n: usize) -> Result<Problem> {
        let mesh = Arc::new(Mesh::structured(n, Rect::UNIT)?);
        let coeffs = Coefficients::uniform(
            mesh.num_triangles(),
            self.alpha,
            self.beta,
            self.gamma,
            self.porosity,
            self.dt,
        )?;
        let mut p = Problem::new(mesh, coeffs, self.variant)?;
        p.set_source_fn(|x| self.source(x));
        p.set_boundary_fn(|x| self.exact.p(x));
        Ok(p)
    }
}

/// Errors on one mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmsRow {
    pub n: usize,
    pub h: f64,
    pub elements: usize,
    pub edges: usize,
    /// `||p_h - p*||_{L2}`.
    pub pressure: f64,
    /// `||p_h - P_Q p*||_{L2}` with `P_Q` the element mean.
    pub projected_pressure: f64,
    /// `||u_h - u*||_{L2}`.
    pub velocity: f64,
    /// `max_e |v_e - int_e u*.n| / |e|`.
    pub edge_flux: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmsTable {
    pub rows: Vec<MmsRow>,
}

fn rates(rows: &[MmsRow], f: impl Fn(&MmsRow) -> f64) -> Vec<f64> {
    rows.windows(2)
        .map(|w| (f(&w[0]) / f(&w[1])).ln() / (w[0].h / w[1].h).ln())
        .collect()
}

impl MmsTable {
    pub fn pressure_orders(&self) -> Vec<f64> {
        rates(&self.rows, |r| r.pressure)
    }

    pub fn projected_orders(&self) -> Vec<f64> {
        rates(&self.rows, |r| r.projected_pressure)
    }

    pub fn velocity_orders(&self) -> Vec<f64> {
        rates(&self.rows, |r| r.velocity)
    }

    pub fn flux_orders(&self) -> Vec<f64> {
        rates(&self.rows, |r| r.edge_flux)
    }

    /// Order fitted between the coarsest and the finest mesh.
    pub fn overall_pressure_order(&self) -> f64 {
        let (a, b) = (self.rows[0], self.rows[self.rows.len() - 1]);
        (a.pressure / b.pressure).ln() / (a.h / b.h).ln()
    }

    pub fn monotone(&self) -> bool {
        self.rows.windows(2).all(|w| {
            w[1].pressure < w[0].pressure
                && w[1].projected_pressure < w[0].projected_pressure
                && w[1].velocity < w[0].velocity
                && w[1].edge_flux < w[0].edge_flux
        })
    }

    pub fn write_csv(&self, mut out: impl std::io::Write) -> std::io::Result<()> {
        writeln!(out, "n,h,elements,edges,pressure,projected_pressure,velocity,edge_flux,iterations")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{:.16e},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                r.n, r.h, r.elements, r.edges, r.pressure, r.projected_pressure, r.velocity, r.edge_flux, r.iterations
            )?;
        }
        Ok(())
    }
}

impl fmt::Display for MmsTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let orders = [
            self.pressure_orders(),
            self.projected_orders(),
            self.velocity_orders(),
            self.flux_orders(),
        ];
        writeln!(
            f,
            "{:>4} {:>9} {:>6} {:>6}  {:>10} {:>5}  {:>10} {:>5}  {:>10} {:>5}  {:>10} {:>5}  {:>3}",
            "n", "h", "elems", "edges", "|p-p*|", "rate", "|p-Qp*|", "rate", "|u-u*|", "rate", "flux", "rate", "it"
        )?;
        for (i, r) in self.rows.iter().enumerate() {
            let o = |k: usize| {
                if i == 0 {
                    "-".to_string()
                } else {
                    format!("{:.2}", orders[k][i - 1])
                }
            };
            writeln!(
                f,
                "{:>4} {:>9.3e} {:>6} {:>6}  {:>10.3e} {:>5}  {:>10.3e} {:>5}  {:>10.3e} {:>5}  {:>10.3e} {:>5}  {:>3}",
                r.n,
                r.h,
                r.elements,
                r.edges,
                r.pressure,
                o(0),
                r.projected_pressure,
                o(1),
                r.velocity,
                o(2),
                r.edge_flux,
                o(3),
                r.iterations
            )?;
        }
        Ok(())
    }
}

/// Solve the case on one structured mesh and measure the errors.
pub fn mms_level(case: &MmsCase, n: usize) -> Result<MmsRow> {
    let problem = case.problem(n)?;
    let mut state = problem.zero_state();
    let report = problem.newton_solve(&mut state)?;
    let mesh = problem.mesh();
    let rule = QuadratureRule::new(DEFAULT_DEGREE)?;
    let (mut ep, mut eq, mut eu) = (0.0, 0.0, 0.0);
    for k in 0..mesh.num_triangles() {
        let tri = Triangle::of(mesh, k);
        let pk = state.p[k];
        let mean = rule.integrate(&tri.vertices, |x| case.exact.p(x)) / tri.area;
        eq += tri.area * (pk - mean) * (pk - mean);
        ep += rule.integrate(&tri.vertices, |x| (pk - case.exact.p(x)).powi(2));
        eu += rule.integrate(&tri.vertices, |x| {
            let (uh, us) = (tri.rt0_field(&state.u[k], x), case.flux(x));
            (uh[0] - us[0]).powi(2) + (uh[1] - us[1]).powi(2)
        });
    }
    let fields = recover_fields(mesh, &state);
    let mut ef: f64 = 0.0;
    for (e, edge) in mesh.edges().iter().enumerate() {
        let [a, b] = mesh.edge_endpoints(e);
        let n = edge.normal;
        let exact = edge_mean(a, b, |x| {
            let u = case.flux(x);
            u[0] * n[0] + u[1] * n[1]
        });
        ef = ef.max((fields.edge_flux[e] / edge.length - exact).abs());
    }
    Ok(MmsRow {
        n,
        h: mesh.mesh_size(),
        elements: mesh.num_triangles(),
        edges: mesh.num_edges(),
        pressure: ep.sqrt(),
        projected_pressure: eq.sqrt(),
        velocity: eu.sqrt(),
        edge_flux: ef,
        iterations: report.iterations,
    })
}

pub fn mms_study(case: &MmsCase, levels: &[usize]) -> Result<MmsTable> {
    Ok(MmsTable {
        rows: levels.iter().map(|&n| mms_level(case, n)).collect::<Result<_>>()?,
    })
}
