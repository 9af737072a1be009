//! Implicit Euler time stepping.
//!
//! Each step solves a stationary hybrid problem whose source is augmented by
//! the storage term of the previous state:
//! `int_K f^k = int_K f~^k + C_K(p^{k-1})`.

use crate::constitutive::augmented_source;
use crate::error::{Error, Result};
use crate::globalsys::{
    boundary_means, boundary_outflow, source_integrals, HybridState, MassBalance, Problem, SolveReport,
};
use crate::mesh::Point;

/// Transformed pressure `p = |P| P` from physical pressure `P`.
pub fn transformed_pressure(physical: f64) -> f64 {
    physical.abs() * physical
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSchedule {
    pub dt: f64,
    pub steps: usize,
    /// Initial element pressures in the transformed variable.
    pub p0: Vec<f64>,
}

impl TimeSchedule {
    pub fn new(dt: f64, steps: usize, p0: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        if steps == 0 {
            return Err(Error::InvalidParameter("step count must be at least 1".into()));
        }
        Ok(TimeSchedule { dt, steps, p0 })
    }

    /// Schedule from physical initial pressures `P^0`.
    pub fn from_physical(dt: f64, steps: usize, physical: &[f64]) -> Result<Self> {
        Self::new(dt, steps, physical.iter().map(|&v| transformed_pressure(v)).collect())
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }
}

/// Mass bookkeeping after one step, with `M(p) = dt sum_K C_K(p_K)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetEntry {
    pub step: usize,
    pub time: f64,
    pub mass: f64,
    /// `dt` times the boundary outflow of this step.
    pub outflow: f64,
    /// `dt` times the total source of this step.
    pub source: f64,
    /// `|M^k - M^0 + sum outflow - sum source|` divided by the largest
    /// magnitude entering the balance.
    pub relative_defect: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    /// Initial state followed by one state per step.
    pub states: Vec<HybridState>,
    pub reports: Vec<SolveReport>,
    pub budget: Vec<BudgetEntry>,
    /// Per-step balance of the stationary problem solved at that step.
    pub balance: Vec<MassBalance>,
}

impl Trajectory {
    pub fn max_budget_defect(&self) -> f64 {
        self.budget.iter().map(|b| b.relative_defect).fold(0.0, f64::max)
    }
}

fn stored_mass(problem: &Problem, state: &HybridState) -> f64 {
    let dt = problem.coefficients().dt;
    problem
        .elements()
        .iter()
        .zip(&state.p)
        .map(|(e, &p)| dt * e.storage.eval(p))
        .sum()
}

/// State at time zero: `p^0`, zero fluxes, boundary multipliers from `g`,
/// interior multipliers averaged from the two neighbours.
pub fn initial_state(problem: &Problem, p0: &[f64]) -> Result<HybridState> {
    let mesh = problem.mesh();
    if p0.len() != mesh.num_triangles() {
        return Err(Error::InvalidParameter(format!(
            "{} initial pressures for {} triangles",
            p0.len(),
            mesh.num_triangles()
        )));
    }
    let mut s = problem.zero_state();
    s.p.copy_from_slice(p0);
    for &e in mesh.interior_edges() {
        let (a, b) = mesh.edge_triangles(e);
        let b = b.expect("interior edge has two triangles");
        s.mu[e] = 0.5 * (p0[a] + p0[b]);
    }
    Ok(s)
}

/// One implicit Euler step from `prev`. `base_source` holds `int_K f~^k`
/// and `boundary` the edge means of `g^k`.
pub fn step(
    problem: &mut Problem,
    prev: &HybridState,
    base_source: &[f64],
    boundary: Vec<f64>,
) -> Result<(HybridState, SolveReport)> {
    let source = problem
        .elements()
        .iter()
        .zip(base_source)
        .zip(&prev.p)
        .map(|((e, &f), &p)| augmented_source(&e.storage, p, f))
        .collect();
    problem.set_source(source)?;
    problem.set_boundary(boundary)?;
    let mut next = prev.clone();
    next.step = prev.step + 1;
    let report = problem.newton_solve(&mut next).map_err(|e| match e {
        Error::NewtonDiverged {
            context,
            iterations,
            residual,
        } => Error::NewtonDiverged {
            context: format!("time step {}: {context}", next.step),
            iterations,
            residual,
        },
        other => other,
    })?;
    Ok((next, report))
}

/// Run the schedule with time-dependent source `f~(x, t)` and boundary data
/// `g(x, t)`, both evaluated at the new time level. `observer` sees every
/// state including the initial one.
pub fn run(
    problem: &mut Problem,
    schedule: &TimeSchedule,
    source: impl Fn(Point, f64) -> f64,
    boundary: impl Fn(Point, f64) -> f64,
    mut observer: impl FnMut(&HybridState) -> Result<()>,
) -> Result<Trajectory> {
    if (problem.coefficients().dt - schedule.dt).abs() > 1e-15 * schedule.dt {
        return Err(Error::InvalidParameter(format!(
            "problem time step {} differs from schedule time step {}",
            problem.coefficients().dt,
            schedule.dt
        )));
    }
    problem.set_boundary(boundary_means(problem.mesh(), |x| boundary(x, 0.0)))?;
    let first = initial_state(problem, &schedule.p0)?;
    observer(&first)?;
    let m0 = stored_mass(problem, &first);
    let mut traj = Trajectory {
        states: vec![first],
        ..Default::default()
    };
    let (mut cum_out, mut cum_src) = (0.0, 0.0);
    let mut scale = m0.abs();
    for k in 1..=schedule.steps {
        let t = schedule.time(k);
        let base = source_integrals(problem.mesh(), problem.quadrature(), |x| source(x, t));
        let g = boundary_means(problem.mesh(), |x| boundary(x, t));
        let prev = traj.states.last().expect("trajectory starts with the initial state");
        let (next, report) = step(problem, prev, &base, g)?;
        observer(&next)?;
        let out = schedule.dt * boundary_outflow(problem.mesh(), &next);
        let src = schedule.dt * base.iter().sum::<f64>();
        cum_out += out;
        cum_src += src;
        let mass = stored_mass(problem, &next);
        scale = scale.max(mass.abs()).max(out.abs()).max(src.abs());
        let defect = (mass - m0 + cum_out - cum_src).abs();
        traj.budget.push(BudgetEntry {
            step: k,
            time: t,
            mass,
            outflow: out,
            source: src,
            relative_defect: if scale > 0.0 { defect / scale } else { defect },
        });
        traj.balance.push(problem.mass_balance(&next));
        traj.states.push(next);
        traj.reports.push(report);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condense::Variant;
    use crate::constitutive::Coefficients;
    use crate::mesh::{Mesh, Rect};
    use std::sync::Arc;

    fn problem(n: usize, dt: f64, variant: Variant) -> Problem {
        let mesh = Arc::new(Mesh::structured(n, Rect::UNIT).unwrap());
        let coeffs = Coefficients::uniform(mesh.num_triangles(), 1.0, 2.0, 1.5, 0.3, dt).unwrap();
        Problem::new(mesh, coeffs, variant).unwrap()
    }

    #[test]
    fn schedule_validation() {
        assert!(TimeSchedule::new(0.0, 1, vec![]).is_err());
        assert!(TimeSchedule::new(1.0, 0, vec![]).is_err());
        let s = TimeSchedule::from_physical(0.5, 2, &[2.0, -3.0]).unwrap();
        assert_eq!(s.p0, vec![4.0, -9.0]);
    }

    #[test]
    fn zero_data_gives_zero_trajectory() {
        let mut p = problem(2, 0.1, Variant::ClosedForm);
        let sched = TimeSchedule::new(0.1, 3, vec![0.0; 8]).unwrap();
        let traj = run(&mut p, &sched, |_, _| 0.0, |_, _| 0.0, |_| Ok(())).unwrap();
        assert_eq!(traj.states.len(), 4);
        for s in &traj.states {
            assert!(s.p.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn affine_steady_state_is_preserved() {
        let g = |x: Point, _t: f64| 2.0 + x[0] + 0.5 * x[1];
        for v in Variant::ALL {
            let mut p = problem(3, 0.2, v);
            let p0: Vec<f64> = (0..p.mesh().num_triangles()).map(|k| g(p.mesh().centroid(k), 0.0)).collect();
            let sched = TimeSchedule::new(0.2, 4, p0.clone()).unwrap();
            let traj = run(&mut p, &sched, |_, _| 0.0, g, |_| Ok(())).unwrap();
            for s in &traj.states {
                for k in 0..p0.len() {
                    assert!((s.p[k] - p0[k]).abs() <= 1e-9, "{v}: {} vs {}", s.p[k], p0[k]);
                }
            }
            assert!(traj.max_budget_defect() <= 1e-8);
        }
    }

    #[test]
    fn budget_closes_with_transient() {
        let mut p = problem(3, 0.05, Variant::Coupled);
        let sched = TimeSchedule::new(0.05, 5, vec![1.0; 18]).unwrap();
        let traj = run(&mut p, &sched, |x, t| 1.0 + x[0] * t, |x, _| 1.0 + x[1], |_| Ok(())).unwrap();
        assert_eq!(traj.states.len(), 6);
        assert!(traj.max_budget_defect() <= 1e-8, "{}", traj.max_budget_defect());
        // nontrivial evolution
        assert!((traj.states[5].p[0] - 1.0).abs() > 1e-4);
    }
}
