//! Darcy-Forchheimer constitutive maps in the transformed variables
//! `p = |P| P` and `u = rho v`.
//!
//! `G(u) = (alpha + beta |u|) u`, `R(p) = (phi / dt) gamma p / sqrt|p|`, and
//! the elementwise storage map `C_K(p) = int_K R(p) dx`.

use crate::error::{Error, Result};

pub type Vec2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

/// Raw physical data, piecewise constant per element.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalParams {
    pub porosity: Vec<f64>,
    pub permeability: Vec<f64>,
    pub forchheimer: Vec<f64>,
    pub viscosity: Vec<f64>,
    pub molecular_weight: Vec<f64>,
    pub temperature: Vec<f64>,
    pub gas_constant: f64,
}

impl PhysicalParams {
    #[allow(clippy::too_many_arguments)]
    pub fn uniform(
        n: usize,
        porosity: f64,
        permeability: f64,
        forchheimer: f64,
        viscosity: f64,
        molecular_weight: f64,
        temperature: f64,
        gas_constant: f64,
    ) -> Self {
        PhysicalParams {
            porosity: vec![porosity; n],
            permeability: vec![permeability; n],
            forchheimer: vec![forchheimer; n],
            viscosity: vec![viscosity; n],
            molecular_weight: vec![molecular_weight; n],
            temperature: vec![temperature; n],
            gas_constant,
        }
    }

    pub fn len(&self) -> usize {
        self.porosity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.porosity.is_empty()
    }
}

/// Per-element law coefficients for one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub porosity: Vec<f64>,
    pub dt: f64,
}

/// Lower and upper bounds of a coefficient field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

fn bounds(v: &[f64]) -> Bounds {
    Bounds {
        lower: v.iter().copied().fold(f64::INFINITY, f64::min),
        upper: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

impl Coefficients {
    pub fn uniform(n: usize, alpha: f64, beta: f64, gamma: f64, porosity: f64, dt: f64) -> Result<Self> {
        Coefficients {
            alpha: vec![alpha; n],
            beta: vec![beta; n],
            gamma: vec![gamma; n],
            porosity: vec![porosity; n],
            dt,
        }
        .validated()
    }

    /// `gamma = W/(R0 Theta)`, `alpha = 2 mu/(gamma k)`, `beta = 2 beta_Fo/gamma`.
    pub fn derive(params: &PhysicalParams, dt: f64) -> Result<Self> {
        let n = params.len();
        let fields = [
            ("porosity", &params.porosity),
            ("permeability", &params.permeability),
            ("forchheimer", &params.forchheimer),
            ("viscosity", &params.viscosity),
            ("molecular_weight", &params.molecular_weight),
            ("temperature", &params.temperature),
        ];
        for (name, f) in fields {
            if f.len() != n {
                return Err(Error::InvalidParameter(format!(
                    "{name} has {} values, expected {n}",
                    f.len()
                )));
            }
            if let Some(v) = f.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(params.gas_constant > 0.0) {
            return Err(Error::InvalidParameter("gas constant must be positive".into()));
        }
        let gamma: Vec<f64> = (0..n)
            .map(|k| params.molecular_weight[k] / (params.gas_constant * params.temperature[k]))
            .collect();
        let alpha = (0..n)
            .map(|k| 2.0 * params.viscosity[k] / (gamma[k] * params.permeability[k]))
            .collect();
        let beta = (0..n).map(|k| 2.0 * params.forchheimer[k] / gamma[k]).collect();
        Coefficients {
            alpha,
            beta,
            gamma,
            porosity: params.porosity.clone(),
            dt,
        }
        .validated()
    }

    fn validated(self) -> Result<Self> {
        let n = self.alpha.len();
        if [self.beta.len(), self.gamma.len(), self.porosity.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(Error::InvalidParameter("coefficient fields differ in length".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {}", self.dt)));
        }
        let positive = |name: &str, v: &[f64]| match v.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            Some(x) => Err(Error::InvalidParameter(format!("{name} must be positive, got {x}"))),
            None => Ok(()),
        };
        positive("alpha", &self.alpha)?;
        positive("gamma", &self.gamma)?;
        positive("porosity", &self.porosity)?;
        if let Some(b) = self.beta.iter().find(|b| !(**b >= 0.0 && b.is_finite())) {
            return Err(Error::InvalidParameter(format!("beta must be non-negative, got {b}")));
        }
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn alpha_bounds(&self) -> Bounds {
        bounds(&self.alpha)
    }

    pub fn beta_bounds(&self) -> Bounds {
        bounds(&self.beta)
    }

    pub fn gamma_bounds(&self) -> Bounds {
        bounds(&self.gamma)
    }

    /// `int_K phi gamma dx / dt` for an element of the given area.
    pub fn storage(&self, k: usize, area: f64) -> f64 {
        self.porosity[k] * self.gamma[k] * area / self.dt
    }

    /// The same coefficients with a different time step.
    pub fn with_dt(&self, dt: f64) -> Result<Self> {
        Coefficients { dt, ..self.clone() }.validated()
    }
}

/// Regularization used where derivatives of `C_K` blow up at `p = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LawConfig {
    /// `sqrt|p|` in derivative denominators is floored at `sqrt(eps_p)`.
    pub eps_p: f64,
}

impl Default for LawConfig {
    fn default() -> Self {
        LawConfig { eps_p: 1e-10 }
    }
}

fn norm(v: Vec2) -> f64 {
    v[0].hypot(v[1])
}

pub fn g_eval(u: Vec2, alpha: f64, beta: f64) -> Vec2 {
    let s = alpha + beta * norm(u);
    [s * u[0], s * u[1]]
}

/// Inverse of [`g_eval`], evaluated in the rationalized form
/// `2 v / (alpha + sqrt(alpha^2 + 4 beta |v|))`, which has no cancellation.
pub fn g_inverse(v: Vec2, alpha: f64, beta: f64) -> Vec2 {
    let s = 2.0 / (alpha + (alpha * alpha + 4.0 * beta * norm(v)).sqrt());
    [s * v[0], s * v[1]]
}

/// `DG(u) = (alpha + beta|u|) I + beta u u^T / |u|`; `alpha I` at `u = 0`.
pub fn g_jacobian(u: Vec2, alpha: f64, beta: f64) -> Mat2 {
    let n = norm(u);
    let d = alpha + beta * n;
    if n == 0.0 {
        return [[d, 0.0], [0.0, d]];
    }
    let c = beta / n;
    let off = c * u[0] * u[1];
    [[d + c * u[0] * u[0], off], [off, d + c * u[1] * u[1]]]
}

/// `p / sqrt|p|`, i.e. `sign(p) sqrt|p|`.
pub fn signed_sqrt(p: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p.signum() * p.abs().sqrt()
    }
}

/// `R(p)` for element `k`.
pub fn r_eval(p: f64, k: usize, coeffs: &Coefficients) -> f64 {
    coeffs.porosity[k] * coeffs.gamma[k] / coeffs.dt * signed_sqrt(p)
}

/// The elementwise storage map `C_K(p) = s_K p / sqrt|p|` with
/// `s_K = int_K phi gamma dx / dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageMap {
    pub s: f64,
}

impl StorageMap {
    pub fn new(s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "storage coefficient integral must be positive, got {s}"
            )));
        }
        Ok(StorageMap { s })
    }

    pub fn for_element(coeffs: &Coefficients, k: usize, area: f64) -> Result<Self> {
        StorageMap::new(coeffs.storage(k, area))
    }

    pub fn eval(&self, p: f64) -> f64 {
        self.s * signed_sqrt(p)
    }

    /// `p = |P| P` with `P = rhs / s`.
    pub fn inverse(&self, rhs: f64) -> f64 {
        let big_p = rhs / self.s;
        big_p.abs() * big_p
    }

    /// `dp/du_{K,e}` of `p(u) = C_K^{-1}(f - sum u)`: `-2 sqrt|p| / s`.
    pub fn dp_du(&self, p: f64) -> f64 {
        -2.0 * p.abs().sqrt() / self.s
    }

    /// `C_K'(p) = s / (2 sqrt|p|)`, with `sqrt|p|` floored at `sqrt(eps_p)`.
    pub fn derivative(&self, p: f64, law: &LawConfig) -> f64 {
        self.s / (2.0 * p.abs().sqrt().max(law.eps_p.sqrt()))
    }
}

/// `int_K f^k dx = int_K f~^k dx + s_K p_prev / sqrt|p_prev|` where `s_K` is
/// built from the previous step's `gamma`.
pub fn augmented_source(storage_prev: &StorageMap, p_prev: f64, source_integral: f64) -> f64 {
    source_integral + storage_prev.eval(p_prev)
}
