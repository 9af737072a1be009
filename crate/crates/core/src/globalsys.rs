//! The condensed global system and its Newton solver.
//!
//! Global unknowns are the element pressures (flux-only variant only)
//! followed by the multipliers of the interior edges in increasing edge id.
//! Boundary multipliers are fixed to the edge means of the Dirichlet data.
//! Each residual evaluation first re-solves every local problem.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::condense::{
    local_sensitivities, solve_closed_form, solve_coupled, solve_flux_only, LocalElement, LocalSolution,
    NewtonConfig, Sensitivities, Variant,
};
use crate::constitutive::{signed_sqrt, Coefficients, LawConfig, StorageMap, Vec2};
use crate::elements::{edge_mean, QuadratureRule, Triangle, DEFAULT_DEGREE};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::sparse::{SparsePattern, SparseSystem};

/// `int_K f dx` for every triangle.
pub fn source_integrals(mesh: &Mesh, rule: &QuadratureRule, f: impl Fn(Point) -> f64) -> Vec<f64> {
    (0..mesh.num_triangles())
        .map(|k| rule.integrate(&mesh.triangle_coords(k), &f))
        .collect()
}

/// Edge means of `g` on boundary edges; interior entries are zero.
pub fn boundary_means(mesh: &Mesh, g: impl Fn(Point) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; mesh.num_edges()];
    for &e in mesh.boundary_edges() {
        let [a, b] = mesh.edge_endpoints(e);
        out[e] = edge_mean(a, b, &g);
    }
    out
}

/// Numbering of the global unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    /// Number of element pressure unknowns (0 unless flux-only).
    pub num_element_dofs: usize,
    /// Global index of each edge multiplier, `None` on the boundary.
    pub edge_dof: Vec<Option<usize>>,
    /// Interior edge of each multiplier unknown.
    pub dof_edge: Vec<usize>,
}

impl DofMap {
    pub fn new(mesh: &Mesh, variant: Variant) -> Self {
        let num_element_dofs = if variant.eliminates_pressure() { 0 } else { mesh.num_triangles() };
        let mut interior = mesh.interior_edges().to_vec();
        interior.sort_unstable();
        let mut edge_dof = vec![None; mesh.num_edges()];
        for (i, &e) in interior.iter().enumerate() {
            edge_dof[e] = Some(num_element_dofs + i);
        }
        DofMap {
            num_element_dofs,
            edge_dof,
            dof_edge: interior,
        }
    }

    pub fn len(&self) -> usize {
        self.num_element_dofs + self.dof_edge.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Discrete hybrid unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridState {
    pub p: Vec<f64>,
    /// One multiplier per edge, including the fixed boundary values.
    pub mu: Vec<f64>,
    /// Outward fluxes `u_{K,e}` in local edge order.
    pub u: Vec<[f64; 3]>,
    pub variant: Variant,
    /// Time index.
    pub step: usize,
}

/// Iteration record of a global Newton solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveReport {
    /// Number of Newton updates applied.
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub steps: Vec<f64>,
    /// Largest local Newton iteration count seen.
    pub max_local_iterations: usize,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }

    /// CSV log with header `iteration,residual,damping`.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "iteration,residual,damping")?;
        for (i, r) in self.residuals.iter().enumerate() {
            let t = if i == 0 { 0.0 } else { self.steps[i - 1] };
            writeln!(out, "{i},{r:.16e},{t:.16e}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

/// A stationary hybrid problem on a fixed mesh.
#[derive(Debug, Clone)]
pub struct Problem {
    mesh: Arc<Mesh>,
    coeffs: Coefficients,
    elements: Vec<LocalElement>,
    rule: QuadratureRule,
    source: Vec<f64>,
    boundary: Vec<f64>,
    variant: Variant,
    dofs: DofMap,
    pattern: Arc<SparsePattern>,
    pub law: LawConfig,
    pub local: NewtonConfig,
    pub global: NewtonConfig,
}

impl Problem {
    /// Zero source and zero boundary data; set them with the `set_*` methods.
    pub fn new(mesh: Arc<Mesh>, coeffs: Coefficients, variant: Variant) -> Result<Self> {
        Self::with_quadrature(mesh, coeffs, variant, QuadratureRule::new(DEFAULT_DEGREE)?)
    }

    pub fn with_quadrature(mesh: Arc<Mesh>, coeffs: Coefficients, variant: Variant, rule: QuadratureRule) -> Result<Self> {
        let n = mesh.num_triangles();
        if coeffs.len() != n {
            return Err(Error::InvalidParameter(format!(
                "{} coefficient values for {n} triangles",
                coeffs.len()
            )));
        }
        let elements = (0..n)
            .map(|k| {
                let tri = Triangle::of(&mesh, k);
                let storage = StorageMap::for_element(&coeffs, k, tri.area)?;
                Ok(LocalElement::new(k, tri, coeffs.alpha[k], coeffs.beta[k], storage, &rule))
            })
            .collect::<Result<Vec<_>>>()?;
        let dofs = DofMap::new(&mesh, variant);
        let pattern = Arc::new(build_pattern(&mesh, &dofs));
        Ok(Problem {
            source: vec![0.0; n],
            boundary: vec![0.0; mesh.num_edges()],
            mesh,
            coeffs,
            elements,
            rule,
            variant,
            dofs,
            pattern,
            law: LawConfig::default(),
            local: NewtonConfig::local(),
            global: NewtonConfig::global(),
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coeffs
    }

    pub fn elements(&self) -> &[LocalElement] {
        &self.elements
    }

    pub fn quadrature(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn source(&self) -> &[f64] {
        &self.source
    }

    pub fn boundary(&self) -> &[f64] {
        &self.boundary
    }

    /// Per-element source integrals `int_K f dx`.
    pub fn set_source(&mut self, source: Vec<f64>) -> Result<()> {
        if source.len() != self.mesh.num_triangles() {
            return Err(Error::InvalidParameter(format!(
                "{} source values for {} triangles",
                source.len(),
                self.mesh.num_triangles()
            )));
        }
        self.source = source;
        Ok(())
    }

    pub fn set_source_fn(&mut self, f: impl Fn(Point) -> f64) {
        self.source = source_integrals(&self.mesh, &self.rule, f);
    }

    /// Per-edge boundary means; interior entries are ignored.
    pub fn set_boundary(&mut self, boundary: Vec<f64>) -> Result<()> {
        if boundary.len() != self.mesh.num_edges() {
            return Err(Error::InvalidParameter(format!(
                "{} boundary values for {} edges",
                boundary.len(),
                self.mesh.num_edges()
            )));
        }
        self.boundary = boundary;
        Ok(())
    }

    pub fn set_boundary_fn(&mut self, g: impl Fn(Point) -> f64) {
        self.boundary = boundary_means(&self.mesh, g);
    }

    /// Switch the elimination variant, keeping all data.
    pub fn with_variant(&self, variant: Variant) -> Problem {
        let mut p = self.clone();
        p.variant = variant;
        p.dofs = DofMap::new(&self.mesh, variant);
        p.pattern = Arc::new(build_pattern(&self.mesh, &p.dofs));
        p
    }

    /// All-zero state with boundary multipliers set from the data.
    pub fn zero_state(&self) -> HybridState {
        let mut s = HybridState {
            p: vec![0.0; self.mesh.num_triangles()],
            mu: vec![0.0; self.mesh.num_edges()],
            u: vec![[0.0; 3]; self.mesh.num_triangles()],
            variant: self.variant,
            step: 0,
        };
        self.impose_boundary(&mut s);
        s
    }

    pub fn impose_boundary(&self, state: &mut HybridState) {
        for &e in self.mesh.boundary_edges() {
            state.mu[e] = self.boundary[e];
        }
    }

    pub fn unknowns(&self, state: &HybridState) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dofs.len());
        if !self.variant.eliminates_pressure() {
            x.extend_from_slice(&state.p);
        }
        x.extend(self.dofs.dof_edge.iter().map(|&e| state.mu[e]));
        x
    }

    pub fn set_unknowns(&self, state: &mut HybridState, x: &[f64]) {
        let ne = self.dofs.num_element_dofs;
        state.p[..ne].copy_from_slice(&x[..ne]);
        for (i, &e) in self.dofs.dof_edge.iter().enumerate() {
            state.mu[e] = x[ne + i];
        }
    }

    fn local_mu(&self, state: &HybridState, k: usize) -> [f64; 3] {
        self.mesh.triangle_edges(k).map(|e| state.mu[e])
    }

    fn solve_local(&self, state: &HybridState, k: usize) -> Result<LocalSolution> {
        let elem = &self.elements[k];
        let mu = self.local_mu(state, k);
        match self.variant {
            Variant::FluxOnly => solve_flux_only(elem, state.p[k], &mu, &state.u[k], &self.local),
            Variant::ClosedForm => solve_closed_form(elem, &mu, self.source[k], &state.u[k], &self.local),
            Variant::Coupled => {
                solve_coupled(elem, &mu, self.source[k], &state.u[k], None, &self.local, &self.law)
            }
        }
    }

    /// Re-solve every local problem at the current `(p, mu)`, warm-started
    /// from the stored fluxes. Returns the largest local iteration count.
    pub fn solve_locals(&self, state: &mut HybridState) -> Result<usize> {
        let sols = (0..self.elements.len())
            .into_par_iter()
            .map(|k| self.solve_local(state, k))
            .collect::<Vec<_>>();
        let mut max_it = 0;
        for (k, sol) in sols.into_iter().enumerate() {
            let sol = sol?;
            max_it = max_it.max(sol.report.iterations);
            state.u[k] = sol.u;
            state.p[k] = sol.p;
        }
        Ok(max_it)
    }

    /// Global residual at a state whose local unknowns are already solved.
    pub fn residual(&self, state: &HybridState) -> Vec<f64> {
        let mut r = vec![0.0; self.dofs.len()];
        if !self.variant.eliminates_pressure() {
            for (k, elem) in self.elements.iter().enumerate() {
                r[k] = elem.storage.eval(state.p[k]) + state.u[k].iter().sum::<f64>() - self.source[k];
            }
        }
        for k in 0..self.elements.len() {
            for (i, e) in self.mesh.triangle_edges(k).into_iter().enumerate() {
                if let Some(d) = self.dofs.edge_dof[e] {
                    r[d] += state.u[k][i];
                }
            }
        }
        r
    }

    /// Solve the locals, then evaluate the global residual.
    pub fn assemble_residual(&self, state: &mut HybridState) -> Result<Vec<f64>> {
        self.solve_locals(state)?;
        Ok(self.residual(state))
    }

    fn sensitivities(&self, state: &HybridState) -> Result<Vec<Sensitivities>> {
        (0..self.elements.len())
            .into_par_iter()
            .map(|k| {
                local_sensitivities(
                    &self.elements[k],
                    self.variant,
                    &state.u[k],
                    state.p[k],
                    self.source[k],
                    &self.law,
                )
            })
            .collect()
    }

    /// Jacobian of [`Problem::residual`] at a locally converged state.
    pub fn assemble_jacobian(&self, state: &HybridState) -> Result<SparseSystem> {
        let sens = self.sensitivities(state)?;
        let mut jac = SparseSystem::new(self.pattern.clone());
        let flux_only = !self.variant.eliminates_pressure();
        for (k, s) in sens.iter().enumerate() {
            let dofs = self.mesh.triangle_edges(k).map(|e| self.dofs.edge_dof[e]);
            for (i, di) in dofs.iter().enumerate() {
                let Some(di) = *di else { continue };
                for (j, dj) in dofs.iter().enumerate() {
                    if let Some(dj) = *dj {
                        jac.add(di, dj, s.du_dmu[(i, j)]);
                    }
                }
            }
            if flux_only {
                let du_dp = s.du_dp.expect("flux-only sensitivities carry du/dp");
                for (i, di) in dofs.iter().enumerate() {
                    if let Some(di) = *di {
                        jac.add(di, k, du_dp[i]);
                        jac.add(k, di, s.du_dmu.column(i).sum());
                    }
                }
                let elem = &self.elements[k];
                jac.add(k, k, du_dp.sum() + elem.storage.derivative(state.p[k], &self.law));
            }
        }
        Ok(jac)
    }

    /// Damped Newton on the condensed system, starting from `state`.
    pub fn newton_solve(&self, state: &mut HybridState) -> Result<SolveReport> {
        self.global.validate()?;
        self.local.validate()?;
        state.variant = self.variant;
        self.impose_boundary(state);
        let cfg = &self.global;
        let mut report = SolveReport::default();
        report.max_local_iterations = self.solve_locals(state)?;
        let mut r_vec = self.residual(state);
        let r0 = norm(&r_vec);
        let mut r = r0;
        report.residuals.push(r);
        let diverged = |report: &SolveReport, r: f64| Error::NewtonDiverged {
            context: format!(
                "global {} solve; residual history {:?}; consider a smaller time step",
                self.variant,
                report.residuals
            ),
            iterations: report.iterations,
            residual: r,
        };
        loop {
            if !r.is_finite() {
                return Err(diverged(&report, r));
            }
            if cfg.converged(r, r0) {
                return Ok(report);
            }
            if report.iterations >= cfg.max_iter {
                return Err(diverged(&report, r));
            }
            let jac = self.assemble_jacobian(state)?;
            let neg: Vec<f64> = r_vec.iter().map(|v| -v).collect();
            let dx = jac.solve(&neg)?;
            let x = self.unknowns(state);
            let mut t = 1.0;
            let (trial, trial_r, trial_vec, local_it) = loop {
                let mut trial = state.clone();
                let xt: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + t * b).collect();
                self.set_unknowns(&mut trial, &xt);
                let last = t * cfg.damping < cfg.min_step;
                match self.solve_locals(&mut trial) {
                    Ok(it) => {
                        let rv = self.residual(&trial);
                        let rt = norm(&rv);
                        if rt <= (1.0 - 1e-4 * t) * r || last {
                            break (trial, rt, rv, it);
                        }
                    }
                    Err(e) if last => return Err(e),
                    Err(_) => {}
                }
                t *= cfg.damping;
            };
            let stagnated = t * norm(&dx) <= 4.0 * f64::EPSILON * (norm(&x) + f64::MIN_POSITIVE);
            *state = trial;
            r = trial_r;
            r_vec = trial_vec;
            report.iterations += 1;
            report.residuals.push(r);
            report.steps.push(t);
            report.max_local_iterations = report.max_local_iterations.max(local_it);
            if stagnated && r <= 1e3 * cfg.abs_tol.max(cfg.rel_tol * r0) {
                return Ok(report);
            }
        }
    }

    /// Per-element and global mass balance defects at a solved state.
    pub fn mass_balance(&self, state: &HybridState) -> MassBalance {
        let mut element_max: f64 = 0.0;
        let mut storage_net = 0.0;
        for (k, elem) in self.elements.iter().enumerate() {
            let c = elem.storage.eval(state.p[k]);
            element_max = element_max.max((c + state.u[k].iter().sum::<f64>() - self.source[k]).abs());
            storage_net += self.source[k] - c;
        }
        let outflow = boundary_outflow(&self.mesh, state);
        MassBalance {
            element_max,
            global: (storage_net - outflow).abs(),
            outflow,
        }
    }

    /// Fields for export.
    pub fn recover_fields(&self, state: &HybridState) -> Fields {
        recover_fields(&self.mesh, state)
    }
}

/// Mass balance defects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassBalance {
    /// `max_K |C_K(p_K) + sum_e u_{K,e} - int_K f|`.
    pub element_max: f64,
    /// `|sum_K (int_K f - C_K(p_K)) - boundary outflow|`.
    pub global: f64,
    pub outflow: f64,
}

/// Total outward flux through the boundary.
pub fn boundary_outflow(mesh: &Mesh, state: &HybridState) -> f64 {
    mesh.boundary_edges()
        .iter()
        .map(|&e| {
            let (k, _) = mesh.edge_triangles(e);
            let i = mesh.local_index(k, e).expect("edge belongs to its triangle");
            state.u[k][i]
        })
        .sum()
}

fn build_pattern(mesh: &Mesh, dofs: &DofMap) -> SparsePattern {
    let mut entries = Vec::new();
    for k in 0..mesh.num_triangles() {
        let d: Vec<usize> = mesh
            .triangle_edges(k)
            .iter()
            .filter_map(|&e| dofs.edge_dof[e])
            .collect();
        for &a in &d {
            for &b in &d {
                entries.push((a, b));
            }
            if dofs.num_element_dofs > 0 {
                entries.push((a, k));
            }
        }
    }
    SparsePattern::new(dofs.len(), entries)
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Post-processed discrete solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Fields {
    pub pressure: Vec<f64>,
    /// `P = sign(p) sqrt|p|`.
    pub physical_pressure: Vec<f64>,
    /// Flux through each edge in the direction of its fixed normal.
    pub edge_flux: Vec<f64>,
    /// Velocity at each triangle centroid.
    pub velocity: Vec<Vec2>,
}

pub fn recover_fields(mesh: &Mesh, state: &HybridState) -> Fields {
    let mut edge_flux = vec![0.0; mesh.num_edges()];
    for (e, v) in edge_flux.iter_mut().enumerate() {
        let (k, _) = mesh.edge_triangles(e);
        let i = mesh.local_index(k, e).expect("edge belongs to its triangle");
        *v = mesh.triangle_signs(k)[i] * state.u[k][i];
    }
    let velocity = (0..mesh.num_triangles())
        .map(|k| {
            let tri = Triangle::of(mesh, k);
            tri.rt0_field(&state.u[k], tri.centroid())
        })
        .collect();
    Fields {
        pressure: state.p.clone(),
        physical_pressure: state.p.iter().map(|&p| signed_sqrt(p)).collect(),
        edge_flux,
        velocity,
    }
}
