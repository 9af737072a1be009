//! Element-local nonlinear algebra for static condensation.
//!
//! On each triangle `K` the hybridized system reads
//!
//! ```text
//! F_{K,e} = int_K G(u_K) . w_{K,e} dx - p_K + mu_e = 0      (three edges)
//! F_K     = C_K(p_K) + sum_e u_{K,e} - int_K f dx = 0
//! ```
//!
//! Three ways of eliminating local unknowns are provided:
//! - [`Variant::FluxOnly`]: solve the edge equations for the flux triple with
//!   `p_K` and the multipliers given.
//! - [`Variant::ClosedForm`]: insert `p_K(u) = C_K^{-1}(int_K f - sum u)` into
//!   the edge equations and solve for the fluxes.
//! - [`Variant::Coupled`]: solve the 4x4 system for fluxes and pressure.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Const, DimMin, Matrix3, Matrix4, SMatrix, SVector, Vector3, Vector4};

use crate::constitutive::{g_eval, g_jacobian, LawConfig, StorageMap, Vec2};
use crate::elements::{QuadratureRule, Triangle};
use crate::error::{Error, Result};
use crate::mesh::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    FluxOnly,
    ClosedForm,
    Coupled,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::FluxOnly, Variant::ClosedForm, Variant::Coupled];

    pub fn name(self) -> &'static str {
        match self {
            Variant::FluxOnly => "flux-only",
            Variant::ClosedForm => "closed-form",
            Variant::Coupled => "coupled",
        }
    }

    /// Whether the element pressure is eliminated locally.
    pub fn eliminates_pressure(self) -> bool {
        !matches!(self, Variant::FluxOnly)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flux-only" => Ok(Variant::FluxOnly),
            "closed-form" => Ok(Variant::ClosedForm),
            "coupled" => Ok(Variant::Coupled),
            other => Err(Error::InvalidParameter(format!(
                "unknown variant '{other}' (expected flux-only, closed-form or coupled)"
            ))),
        }
    }
}

/// Damped Newton settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Armijo backtracking factor.
    pub damping: f64,
    pub min_step: f64,
}

impl NewtonConfig {
    pub fn local() -> Self {
        NewtonConfig {
            abs_tol: 1e-13,
            rel_tol: 0.0,
            max_iter: 50,
            damping: 0.5,
            min_step: 2f64.powi(-20),
        }
    }

    pub fn global() -> Self {
        NewtonConfig {
            abs_tol: 1e-10,
            rel_tol: 0.0,
            max_iter: 25,
            damping: 0.5,
            min_step: 2f64.powi(-20),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || self.rel_tol < 0.0 || self.max_iter == 0 {
            return Err(Error::InvalidParameter(format!("invalid Newton settings {self:?}")));
        }
        if !(self.damping > 0.0 && self.damping < 1.0) || !(self.min_step > 0.0 && self.min_step <= 1.0) {
            return Err(Error::InvalidParameter(format!("invalid damping settings {self:?}")));
        }
        Ok(())
    }

    pub(crate) fn converged(&self, r: f64, r0: f64) -> bool {
        r <= self.abs_tol || r <= self.rel_tol * r0
    }
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig::local()
    }
}

/// Iteration record of one Newton solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    /// Residual norm before each iteration and after the last one.
    pub residuals: Vec<f64>,
    /// Accepted step length of each iteration.
    pub steps: Vec<f64>,
}

impl NewtonReport {
    /// Largest `r_{n+1} / r_n^2` over the iterations with `r_n` below `window`.
    pub fn quadratic_constant(&self, window: f64) -> Option<f64> {
        self.residuals
            .windows(2)
            .filter(|w| w[0] < window && w[0] > 0.0 && w[1] > 1e-14)
            .map(|w| w[1] / (w[0] * w[0]))
            .fold(None, |acc: Option<f64>, c| Some(acc.map_or(c, |a| a.max(c))))
    }
}

/// Damped Newton on a small dense system. `eval` returns residual and Jacobian.
pub(crate) fn newton_dense<const N: usize>(
    mut x: SVector<f64, N>,
    mut eval: impl FnMut(&SVector<f64, N>) -> (SVector<f64, N>, SMatrix<f64, N, N>),
    cfg: &NewtonConfig,
    context: &str,
) -> Result<(SVector<f64, N>, NewtonReport)>
where
    Const<N>: DimMin<Const<N>, Output = Const<N>>,
{
    let mut report = NewtonReport::default();
    let (mut f, mut j) = eval(&x);
    let r0 = f.norm();
    let mut r = r0;
    report.residuals.push(r);
    loop {
        if !r.is_finite() {
            break;
        }
        if cfg.converged(r, r0) {
            return Ok((x, report));
        }
        if report.iterations >= cfg.max_iter {
            break;
        }
        let dx = match j.lu().solve(&(-f)) {
            Some(dx) => dx,
            None => break,
        };
        let mut t = 1.0;
        let (x_new, f_new, j_new) = loop {
            let xt = x + dx * t;
            let (ft, jt) = eval(&xt);
            let rt = ft.norm();
            if rt <= (1.0 - 1e-4 * t) * r || t * cfg.damping < cfg.min_step {
                break (xt, ft, jt);
            }
            t *= cfg.damping;
        };
        let stagnated = dx.norm() * t <= 4.0 * f64::EPSILON * (x.norm() + f64::MIN_POSITIVE);
        x = x_new;
        f = f_new;
        j = j_new;
        r = f.norm();
        report.iterations += 1;
        report.residuals.push(r);
        report.steps.push(t);
        if stagnated && r.is_finite() && r <= 1e3 * cfg.abs_tol.max(cfg.rel_tol * r0) {
            return Ok((x, report));
        }
    }
    Err(Error::NewtonDiverged {
        context: context.to_string(),
        iterations: report.iterations,
        residual: r,
    })
}

#[derive(Debug, Clone)]
struct QuadPoint {
    x: Point,
    /// Quadrature weight scaled by the element area.
    weight: f64,
    basis: [Vec2; 3],
}

/// Precomputed data of one element for the local nonlinear form.
#[derive(Debug, Clone)]
pub struct LocalElement {
    pub id: usize,
    pub tri: Triangle,
    pub alpha: f64,
    pub beta: f64,
    pub storage: StorageMap,
    qp: Vec<QuadPoint>,
}

impl LocalElement {
    pub fn new(id: usize, tri: Triangle, alpha: f64, beta: f64, storage: StorageMap, rule: &QuadratureRule) -> Self {
        let qp = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(b, w)| {
                let x = crate::elements::from_barycentric(&tri.vertices, b);
                QuadPoint {
                    x,
                    weight: w * tri.area,
                    basis: [tri.rt0(0, x), tri.rt0(1, x), tri.rt0(2, x)],
                }
            })
            .collect();
        LocalElement {
            id,
            tri,
            alpha,
            beta,
            storage,
            qp,
        }
    }

    fn field(q: &QuadPoint, u: &[f64; 3]) -> Vec2 {
        let mut v = [0.0; 2];
        for i in 0..3 {
            v[0] += u[i] * q.basis[i][0];
            v[1] += u[i] * q.basis[i][1];
        }
        v
    }

    /// Quadrature points in physical coordinates with area-scaled weights.
    pub fn quadrature(&self) -> impl Iterator<Item = (Point, f64)> + '_ {
        self.qp.iter().map(|q| (q.x, q.weight))
    }

    /// `f_e(u) = int_K G(u_K) . w_{K,e} dx` for the three local edges.
    pub fn flux_form(&self, u: &[f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for q in &self.qp {
            let g = g_eval(Self::field(q, u), self.alpha, self.beta);
            for (i, o) in out.iter_mut().enumerate() {
                *o += q.weight * (g[0] * q.basis[i][0] + g[1] * q.basis[i][1]);
            }
        }
        out
    }

    /// `int_K G(w(x)) . w_{K,e} dx` for an arbitrary vector field `w`.
    pub fn flux_form_of(&self, w: impl Fn(Point) -> Vec2) -> [f64; 3] {
        let mut out = [0.0; 3];
        for q in &self.qp {
            let g = g_eval(w(q.x), self.alpha, self.beta);
            for (i, o) in out.iter_mut().enumerate() {
                *o += q.weight * (g[0] * q.basis[i][0] + g[1] * q.basis[i][1]);
            }
        }
        out
    }

    /// `d f_e / d u_f = int_K (DG(u_K) w_f) . w_e dx`.
    pub fn flux_form_jacobian(&self, u: &[f64; 3]) -> Matrix3<f64> {
        let mut m = Matrix3::zeros();
        for q in &self.qp {
            let d = g_jacobian(Self::field(q, u), self.alpha, self.beta);
            for f in 0..3 {
                let w = q.basis[f];
                let dw = [d[0][0] * w[0] + d[0][1] * w[1], d[1][0] * w[0] + d[1][1] * w[1]];
                for e in 0..3 {
                    m[(e, f)] += q.weight * (dw[0] * q.basis[e][0] + dw[1] * q.basis[e][1]);
                }
            }
        }
        m
    }
}

/// `F_{K,e}(u, p_K, mu) = f_e(u) - p_K + mu_e`.
pub fn local_flux_residual(elem: &LocalElement, u: &[f64; 3], p: f64, mu: &[f64; 3]) -> [f64; 3] {
    let f = elem.flux_form(u);
    [f[0] - p + mu[0], f[1] - p + mu[1], f[2] - p + mu[2]]
}

/// Jacobian of [`local_flux_residual`] with respect to the flux triple.
pub fn local_flux_jacobian(elem: &LocalElement, u: &[f64; 3]) -> Matrix3<f64> {
    elem.flux_form_jacobian(u)
}

/// `F_K(u, p_K) = C_K(p_K) + sum_e u_e - int_K f`.
pub fn local_mass_residual(elem: &LocalElement, u: &[f64; 3], p: f64, source: f64) -> f64 {
    elem.storage.eval(p) + u.iter().sum::<f64>() - source
}

/// Element pressure as a function of the fluxes, `C_K^{-1}(int_K f - sum u)`.
pub fn pressure_of_flux(elem: &LocalElement, u: &[f64; 3], source: f64) -> f64 {
    elem.storage.inverse(source - u.iter().sum::<f64>())
}

/// Residual with the element pressure eliminated in closed form.
pub fn closed_form_residual(elem: &LocalElement, u: &[f64; 3], mu: &[f64; 3], source: f64) -> [f64; 3] {
    local_flux_residual(elem, u, pressure_of_flux(elem, u, source), mu)
}

/// `D F_bar = D F~ - (dp/du) 1 1^T`.
pub fn closed_form_jacobian(elem: &LocalElement, u: &[f64; 3], source: f64) -> Matrix3<f64> {
    let dp = elem.storage.dp_du(pressure_of_flux(elem, u, source));
    elem.flux_form_jacobian(u) - Matrix3::repeat(dp)
}

/// The 4-component residual of the coupled variant.
pub fn coupled_residual(elem: &LocalElement, u: &[f64; 3], p: f64, mu: &[f64; 3], source: f64) -> [f64; 4] {
    let r = local_flux_residual(elem, u, p, mu);
    [r[0], r[1], r[2], local_mass_residual(elem, u, p, source)]
}

/// `[[D F~, -1], [1^T, C_K']]`.
pub fn coupled_jacobian(elem: &LocalElement, u: &[f64; 3], p: f64, law: &LawConfig) -> Matrix4<f64> {
    let j3 = elem.flux_form_jacobian(u);
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&j3);
    for i in 0..3 {
        m[(i, 3)] = -1.0;
        m[(3, i)] = 1.0;
    }
    m[(3, 3)] = elem.storage.derivative(p, law);
    m
}

/// Converged local unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSolution {
    pub u: [f64; 3],
    pub p: f64,
    pub report: NewtonReport,
}

fn arr3(v: &Vector3<f64>) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

/// Solve `F~(u) = 0` for given `p_K` and multipliers.
pub fn solve_flux_only(
    elem: &LocalElement,
    p: f64,
    mu: &[f64; 3],
    u0: &[f64; 3],
    cfg: &NewtonConfig,
) -> Result<LocalSolution> {
    let eval = |x: &Vector3<f64>| {
        let u = arr3(x);
        (
            Vector3::from(local_flux_residual(elem, &u, p, mu)),
            elem.flux_form_jacobian(&u),
        )
    };
    let (x, report) = newton_dense(Vector3::from(*u0), eval, cfg, "flux-only local solve")
        .map_err(|e| e.on_element(elem.id))?;
    Ok(LocalSolution { u: arr3(&x), p, report })
}

/// Solve `F_bar(u) = 0`; the pressure follows from `C_K^{-1}`.
pub fn solve_closed_form(
    elem: &LocalElement,
    mu: &[f64; 3],
    source: f64,
    u0: &[f64; 3],
    cfg: &NewtonConfig,
) -> Result<LocalSolution> {
    let eval = |x: &Vector3<f64>| {
        let u = arr3(x);
        (
            Vector3::from(closed_form_residual(elem, &u, mu, source)),
            closed_form_jacobian(elem, &u, source),
        )
    };
    let (x, report) = newton_dense(Vector3::from(*u0), eval, cfg, "closed-form local solve")
        .map_err(|e| e.on_element(elem.id))?;
    let u = arr3(&x);
    Ok(LocalSolution {
        u,
        p: pressure_of_flux(elem, &u, source),
        report,
    })
}

/// Solve the coupled 4x4 system for `(u, p_K)`.
///
/// Without a warm-start pressure, `p_K` starts from `C_K^{-1}(int_K f - sum u0)`.
pub fn solve_coupled(
    elem: &LocalElement,
    mu: &[f64; 3],
    source: f64,
    u0: &[f64; 3],
    p0: Option<f64>,
    cfg: &NewtonConfig,
    law: &LawConfig,
) -> Result<LocalSolution> {
    let p0 = p0.unwrap_or_else(|| pressure_of_flux(elem, u0, source));
    let eval = |x: &Vector4<f64>| {
        let u = [x[0], x[1], x[2]];
        (
            Vector4::from(coupled_residual(elem, &u, x[3], mu, source)),
            coupled_jacobian(elem, &u, x[3], law),
        )
    };
    let start = Vector4::new(u0[0], u0[1], u0[2], p0);
    if coupled_jacobian(elem, u0, p0, law).lu().determinant() == 0.0 {
        return Err(Error::SingularLocalJacobian(elem.id));
    }
    let (x, report) =
        newton_dense(start, eval, cfg, "coupled local solve").map_err(|e| e.on_element(elem.id))?;
    Ok(LocalSolution {
        u: [x[0], x[1], x[2]],
        p: x[3],
        report,
    })
}

/// Derivatives of the locally eliminated unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct Sensitivities {
    /// `du_e / dp_K` (flux-only variant).
    pub du_dp: Option<Vector3<f64>>,
    /// `du_e / dmu_f`, rows `e`, columns `f`.
    pub du_dmu: Matrix3<f64>,
    /// `dp_K / dmu_f` (variants that eliminate the pressure).
    pub dp_dmu: Option<Vector3<f64>>,
}

/// Sensitivities at a converged local state, via the implicit function theorem.
pub fn local_sensitivities(
    elem: &LocalElement,
    variant: Variant,
    u: &[f64; 3],
    p: f64,
    source: f64,
    law: &LawConfig,
) -> Result<Sensitivities> {
    let singular = || Error::SingularLocalJacobian(elem.id);
    match variant {
        Variant::FluxOnly => {
            let inv = elem.flux_form_jacobian(u).try_inverse().ok_or_else(singular)?;
            // dF/dp = -1, dF/dmu = I
            Ok(Sensitivities {
                du_dp: Some(inv * Vector3::repeat(1.0)),
                du_dmu: -inv,
                dp_dmu: None,
            })
        }
        Variant::ClosedForm => {
            let inv = closed_form_jacobian(elem, u, source)
                .try_inverse()
                .ok_or_else(singular)?;
            let du_dmu = -inv;
            let dp = elem.storage.dp_du(p);
            let dp_dmu = Vector3::from_fn(|f, _| dp * du_dmu.column(f).sum());
            Ok(Sensitivities {
                du_dp: None,
                du_dmu,
                dp_dmu: Some(dp_dmu),
            })
        }
        Variant::Coupled => {
            let lu = coupled_jacobian(elem, u, p, law).lu();
            let mut rhs = SMatrix::<f64, 4, 3>::zeros();
            for i in 0..3 {
                rhs[(i, i)] = -1.0;
            }
            let sol = lu.solve(&rhs).ok_or_else(singular)?;
            if !sol.iter().all(|v| v.is_finite()) {
                return Err(singular());
            }
            Ok(Sensitivities {
                du_dp: None,
                du_dmu: sol.fixed_view::<3, 3>(0, 0).into_owned(),
                dp_dmu: Some(sol.row(3).transpose()),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn element(alpha: f64, beta: f64, s: f64) -> LocalElement {
        let tri = Triangle::new([[0.1, 0.0], [1.2, 0.3], [0.4, 0.9]]);
        let rule = QuadratureRule::new(5).unwrap();
        LocalElement::new(0, tri, alpha, beta, StorageMap::new(s).unwrap(), &rule)
    }

    fn reference(alpha: f64, beta: f64) -> LocalElement {
        let tri = Triangle::new([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let rule = QuadratureRule::new(5).unwrap();
        LocalElement::new(0, tri, alpha, beta, StorageMap::new(1.0).unwrap(), &rule)
    }

    /// Exact RT0 mass matrix via `int lambda_k lambda_l = |K| (1 + delta_kl) / 12`.
    fn exact_mass(tri: &Triangle) -> Matrix3<f64> {
        let v = tri.vertices;
        let mut m = Matrix3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    for l in 0..3 {
                        let dk = [v[k][0] - v[i][0], v[k][1] - v[i][1]];
                        let dl = [v[l][0] - v[j][0], v[l][1] - v[j][1]];
                        let w = tri.area * if k == l { 2.0 } else { 1.0 } / 12.0;
                        s += w * (dk[0] * dl[0] + dk[1] * dl[1]);
                    }
                }
                m[(i, j)] = s / (4.0 * tri.area * tri.area);
            }
        }
        m
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("hybrid".parse::<Variant>().is_err());
    }

    #[test]
    fn residual_trivial_cases() {
        let e = element(1.0, 1.0, 1.0);
        assert_eq!(local_flux_residual(&e, &[0.0; 3], 0.0, &[0.0; 3]), [0.0; 3]);
        assert_eq!(local_flux_residual(&e, &[0.0; 3], 1.0, &[0.0; 3]), [-1.0; 3]);
    }

    #[test]
    fn linear_case_matches_exact_mass_matrix() {
        let e = element(2.0, 0.0, 1.0);
        let m = exact_mass(&e.tri) * 2.0;
        let u = [0.3, -1.1, 0.7];
        let r = local_flux_residual(&e, &u, 0.4, &[0.1, 0.2, -0.3]);
        let mu = m * Vector3::from(u);
        for i in 0..3 {
            assert_abs_diff_eq!(r[i], mu[i] - 0.4 + [0.1, 0.2, -0.3][i], epsilon = 1e-13);
        }
        let j = local_flux_jacobian(&e, &[5.0, 1.0, -2.0]);
        assert_abs_diff_eq!((j - m).norm(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn flux_jacobian_matches_fd_and_is_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let e = element(rng.random_range(0.1..10.0), rng.random_range(0.1..10.0), 1.0);
            let u = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let j = local_flux_jacobian(&e, &u);
            assert_abs_diff_eq!((j - j.transpose()).norm(), 0.0, epsilon = 1e-12 * j.norm());
            assert!(j.symmetric_eigenvalues().min() > 0.0);
            let h = 1e-6;
            for f in 0..3 {
                let (mut up, mut dn) = (u, u);
                up[f] += h;
                dn[f] -= h;
                let (rp, rm) = (e.flux_form(&up), e.flux_form(&dn));
                for r in 0..3 {
                    let fd = (rp[r] - rm[r]) / (2.0 * h);
                    assert!((fd - j[(r, f)]).abs() <= 1e-6 * j.norm(), "fd {fd} vs {}", j[(r, f)]);
                }
            }
        }
    }

    #[test]
    fn flux_only_trivial_and_linear() {
        let e = element(1.0, 1.0, 1.0);
        let cfg = NewtonConfig::local();
        let sol = solve_flux_only(&e, 0.7, &[0.7; 3], &[0.0; 3], &cfg).unwrap();
        assert_eq!(sol.u, [0.0; 3]);

        let lin = element(3.0, 0.0, 1.0);
        let mu = [0.2, -0.4, 1.0];
        let sol = solve_flux_only(&lin, 0.5, &mu, &[0.0; 3], &cfg).unwrap();
        assert!(sol.report.iterations <= 2);
        let m = exact_mass(&lin.tri) * 3.0;
        let rhs = Vector3::new(0.5 - mu[0], 0.5 - mu[1], 0.5 - mu[2]);
        let exact = m.lu().solve(&rhs).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(sol.u[i], exact[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn flux_only_unique_from_different_starts() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = NewtonConfig::local();
        for _ in 0..20 {
            let e = element(rng.random_range(0.1..10.0), rng.random_range(0.1..10.0), 1.0);
            let p = rng.random_range(-5.0..5.0);
            let mu = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            let a = solve_flux_only(&e, p, &mu, &[0.0; 3], &cfg).unwrap();
            let start = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
            let b = solve_flux_only(&e, p, &mu, &start, &cfg).unwrap();
            for i in 0..3 {
                assert!((a.u[i] - b.u[i]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn closed_form_trivial_case() {
        let e = element(1.0, 1.0, 1.0);
        let cfg = NewtonConfig::local();
        let sol = solve_closed_form(&e, &[0.0; 3], 0.0, &[0.0; 3], &cfg).unwrap();
        assert_eq!(sol.u, [0.0; 3]);
        assert_eq!(sol.p, 0.0);
        let sol = solve_coupled(&e, &[0.0; 3], 0.0, &[0.0; 3], None, &cfg, &LawConfig::default()).unwrap();
        assert_eq!(sol.u, [0.0; 3]);
        assert_eq!(sol.p, 0.0);
    }

    #[test]
    fn closed_form_linear_reference_element() {
        // beta = 0, unit reference triangle, s = 1: eliminate by hand.
        // alpha M u - p 1 + mu = 0 with p = (f - 1.u)^2 for f - 1.u >= 0.
        let e = reference(1.0, 0.0);
        let mu = [0.3, 0.1, 0.2];
        let source = 2.0;
        let sol = solve_closed_form(&e, &mu, source, &[0.0; 3], &NewtonConfig::local()).unwrap();
        let m = exact_mass(&e.tri);
        let minv = m.try_inverse().unwrap();
        // u = M^{-1}(p 1 - mu); then sum u = p a - b with a = 1'M^{-1}1, b = 1'M^{-1}mu
        let a = minv.sum();
        let b = (minv * Vector3::from(mu)).sum();
        // P = f - (P^2 a - b)  =>  a P^2 + P - (f + b) = 0, positive root
        let big_p = (-1.0 + (1.0 + 4.0 * a * (source + b)).sqrt()) / (2.0 * a);
        let p = big_p * big_p;
        assert_abs_diff_eq!(sol.p, p, epsilon = 1e-12);
        let u = minv * (Vector3::repeat(p) - Vector3::from(mu));
        for i in 0..3 {
            assert_abs_diff_eq!(sol.u[i], u[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn variants_agree_on_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = NewtonConfig::local();
        let law = LawConfig::default();
        for _ in 0..50 {
            let e = element(rng.random_range(0.1..10.0), rng.random_range(0.0..10.0), rng.random_range(0.1..10.0));
            let mu = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let source = rng.random_range(-3.0..3.0);
            let cf = solve_closed_form(&e, &mu, source, &[0.0; 3], &cfg).unwrap();
            let co = solve_coupled(&e, &mu, source, &[0.0; 3], None, &cfg, &law).unwrap();
            let fo = solve_flux_only(&e, cf.p, &mu, &[0.0; 3], &cfg).unwrap();
            assert!((cf.p - co.p).abs() <= 1e-9 * (1.0 + cf.p.abs()));
            for i in 0..3 {
                assert!((cf.u[i] - co.u[i]).abs() <= 1e-9);
                assert!((cf.u[i] - fo.u[i]).abs() <= 1e-9);
            }
            // local conservation
            assert!(local_mass_residual(&e, &cf.u, cf.p, source).abs() <= 1e-12);
            assert!(local_mass_residual(&e, &co.u, co.p, source).abs() <= 1e-12);
        }
    }

    #[test]
    fn quadratic_tail() {
        let e = element(0.5, 4.0, 1.0);
        let sol = solve_closed_form(&e, &[3.0, -2.0, 0.5], 1.0, &[0.0; 3], &NewtonConfig::local()).unwrap();
        let c = sol.report.quadratic_constant(1e-2).unwrap_or(0.0);
        assert!(c < 1e6, "quadratic constant {c}");
    }

    #[test]
    fn determinant_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let law = LawConfig::default();
        for _ in 0..20 {
            let e = element(rng.random_range(0.1..10.0), rng.random_range(0.1..10.0), rng.random_range(0.1..10.0));
            let u = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let p: f64 = rng.random_range(0.1..10.0);
            let source = e.storage.eval(p) + u.iter().sum::<f64>();
            let d4 = coupled_jacobian(&e, &u, p, &law).determinant();
            let d3 = closed_form_jacobian(&e, &u, source).determinant();
            let cp = e.storage.derivative(p, &law);
            assert!((d4 - cp * d3).abs() <= 1e-10 * d4.abs());
        }
    }

    #[test]
    fn flux_only_sensitivity_linear_case() {
        let e = element(2.0, 0.0, 1.0);
        let s = local_sensitivities(&e, Variant::FluxOnly, &[0.0; 3], 0.0, 0.0, &LawConfig::default()).unwrap();
        let minv = (exact_mass(&e.tri) * 2.0).try_inverse().unwrap();
        let expect = minv * Vector3::repeat(1.0);
        assert_abs_diff_eq!((s.du_dp.unwrap() - expect).norm(), 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!((s.du_dmu + minv).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn closed_form_sensitivity_is_negative_inverse() {
        let e = element(1.0, 2.0, 1.5);
        let mu = [0.3, -0.2, 0.9];
        let sol = solve_closed_form(&e, &mu, 1.0, &[0.0; 3], &NewtonConfig::local()).unwrap();
        let s = local_sensitivities(&e, Variant::ClosedForm, &sol.u, sol.p, 1.0, &LawConfig::default()).unwrap();
        let inv = closed_form_jacobian(&e, &sol.u, 1.0).try_inverse().unwrap();
        assert_eq!(s.du_dmu, -inv);
    }

    #[test]
    fn sensitivities_match_finite_differences() {
        let e = element(0.8, 3.0, 2.0);
        let cfg = NewtonConfig { abs_tol: 1e-15, ..NewtonConfig::local() };
        let law = LawConfig::default();
        let mu = [0.4, -0.7, 1.3];
        let (p, source) = (1.7, 2.5);
        let h = 1e-6;
        for variant in Variant::ALL {
            let solve = |mu: &[f64; 3], p: f64| match variant {
                Variant::FluxOnly => solve_flux_only(&e, p, mu, &[0.0; 3], &cfg).unwrap(),
                Variant::ClosedForm => solve_closed_form(&e, mu, source, &[0.0; 3], &cfg).unwrap(),
                Variant::Coupled => solve_coupled(&e, mu, source, &[0.0; 3], None, &cfg, &law).unwrap(),
            };
            let base = solve(&mu, p);
            let s = local_sensitivities(&e, variant, &base.u, base.p, source, &law).unwrap();
            for f in 0..3 {
                let (mut up, mut dn) = (mu, mu);
                up[f] += h;
                dn[f] -= h;
                let (a, b) = (solve(&up, p), solve(&dn, p));
                for r in 0..3 {
                    let fd = (a.u[r] - b.u[r]) / (2.0 * h);
                    assert!((fd - s.du_dmu[(r, f)]).abs() <= 1e-5 * s.du_dmu.norm(), "{variant}: fd {fd} vs {}", s.du_dmu[(r, f)]);
                }
                if let Some(dp) = s.dp_dmu {
                    let fd = (a.p - b.p) / (2.0 * h);
                    assert!((fd - dp[f]).abs() <= 1e-5 * dp.norm().max(1e-3));
                }
            }
            if let Some(du_dp) = s.du_dp {
                let (a, b) = (solve(&mu, p + h), solve(&mu, p - h));
                for r in 0..3 {
                    let fd = (a.u[r] - b.u[r]) / (2.0 * h);
                    assert!((fd - du_dp[r]).abs() <= 1e-5 * du_dp.norm());
                }
            }
        }
    }

    #[test]
    fn newton_reports_divergence() {
        let e = element(1.0, 1.0, 1.0);
        let cfg = NewtonConfig { max_iter: 1, abs_tol: 1e-300, ..NewtonConfig::local() };
        let err = solve_flux_only(&e, 100.0, &[-50.0, 20.0, 3.0], &[0.0; 3], &cfg).unwrap_err();
        match err {
            Error::NewtonDiverged { context, .. } => assert!(context.contains("element 0")),
            other => panic!("unexpected {other}"),
        }
    }
}
