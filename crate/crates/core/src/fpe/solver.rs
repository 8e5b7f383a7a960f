//! Time stepping for [`LinearProblem`].
//!
//! Each step evaluates the generator (transport plus zero-order term) at
//! `t + theta dt`: the midpoint for Crank-Nicolson, the end point for
//! implicit Euler. The constant shift is applied as the exact factor
//! `exp(-shift dt)`, so it factors out of the evolution exactly.

use rayon::prelude::*;

use super::{DensityField, FpeError, Integrator, LinearProblem, Tridiag, POSITIVITY_TOL};

/// Operators for one step, reusable across many right-hand sides.
#[derive(Debug, Clone)]
struct StepOps {
    explicit: Tridiag,
    implicit: Tridiag,
    damping: f64,
}

/// Evolves states of one [`LinearProblem`] over `[t0, t0 + nsteps dt]`.
#[derive(Debug, Clone)]
pub struct Propagator {
    problem: LinearProblem,
    t0: f64,
    dt: f64,
    nsteps: usize,
    /// Filled when the coefficients do not depend on time.
    frozen: Option<StepOps>,
}

impl Propagator {
    pub fn new(problem: LinearProblem, t0: f64, t1: f64, nsteps: usize) -> Result<Self, FpeError> {
        if nsteps == 0 {
            return Err(FpeError::InvalidArgument("nsteps must be positive".into()));
        }
        if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(FpeError::InvalidArgument(format!(
                "need t1 > t0, got [{t0}, {t1}]"
            )));
        }
        let dt = (t1 - t0) / nsteps as f64;
        let mut prop = Self {
            problem,
            t0,
            dt,
            nsteps,
            frozen: None,
        };
        if !prop.problem.coeffs.is_time_dependent() {
            prop.frozen = Some(prop.ops_at(0)?);
        }
        Ok(prop)
    }

    pub fn problem(&self) -> &LinearProblem {
        &self.problem
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn nsteps(&self) -> usize {
        self.nsteps
    }

    pub fn time_at(&self, k: usize) -> f64 {
        if k == self.nsteps {
            self.t0 + self.dt * self.nsteps as f64
        } else {
            self.t0 + self.dt * k as f64
        }
    }

    fn theta(&self) -> f64 {
        match self.problem.integrator {
            Integrator::CrankNicolson => 0.5,
            Integrator::ImplicitEuler => 1.0,
        }
    }

    fn ops_at(&self, k: usize) -> Result<StepOps, FpeError> {
        let t = self.time_at(k);
        let theta = self.theta();
        let dt = self.dt;
        let l = self.problem.assemble_unshifted(t + theta * dt)?;
        let damping = (-0.5 * self.problem.shift * dt).exp();
        Ok(StepOps {
            explicit: l.affine(1.0, (1.0 - theta) * dt),
            implicit: l.affine(1.0, -theta * dt),
            damping,
        })
    }

    fn apply_ops(
        &self,
        ops: &StepOps,
        u: &mut [f64],
        source: Option<(&[f64], &[f64])>,
        work: &mut Vec<f64>,
        scratch: &mut Vec<f64>,
    ) -> Result<(), FpeError> {
        for v in u.iter_mut() {
            *v *= ops.damping;
        }
        work.resize(u.len(), 0.0);
        ops.explicit.apply(u, work);
        if let Some((g0, g1)) = source {
            let dt = self.dt;
            match self.problem.integrator {
                Integrator::CrankNicolson => {
                    for i in 0..work.len() {
                        work[i] += 0.5 * dt * (g0[i] + g1[i]);
                    }
                }
                Integrator::ImplicitEuler => {
                    for i in 0..work.len() {
                        work[i] += dt * g1[i];
                    }
                }
            }
        }
        ops.implicit
            .solve_in_place(work, scratch)
            .ok_or_else(|| FpeError::SolverFailure("singular tridiagonal system".into()))?;
        for (v, w) in u.iter_mut().zip(work.iter()) {
            *v = w * ops.damping;
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(FpeError::SolverFailure("non-finite state".into()));
        }
        Ok(())
    }

    fn with_ops<R>(
        &self,
        k: usize,
        f: impl FnOnce(&StepOps) -> Result<R, FpeError>,
    ) -> Result<R, FpeError> {
        match &self.frozen {
            Some(ops) => f(ops),
            None => f(&self.ops_at(k)?),
        }
    }

    fn check_len(&self, u: &[f64]) -> Result<(), FpeError> {
        let n = self.problem.grid.n_cells();
        if u.len() != n {
            return Err(FpeError::InvalidArgument(format!(
                "state of length {} on a grid of {n} cells",
                u.len()
            )));
        }
        Ok(())
    }

    /// Advances `u` over the whole interval in place.
    pub fn evolve(&self, u: &mut [f64]) -> Result<(), FpeError> {
        self.check_len(u)?;
        let (mut work, mut scratch) = (Vec::new(), Vec::new());
        for k in 0..self.nsteps {
            self.with_ops(k, |ops| self.apply_ops(ops, u, None, &mut work, &mut scratch))?;
        }
        Ok(())
    }

    /// Advances several states together; the step operators are built once
    /// per step and shared.
    pub fn evolve_many(&self, states: &mut [Vec<f64>]) -> Result<(), FpeError> {
        for u in states.iter() {
            self.check_len(u)?;
        }
        for k in 0..self.nsteps {
            self.with_ops(k, |ops| {
                states.par_iter_mut().try_for_each_init(
                    || (Vec::new(), Vec::new()),
                    |(work, scratch), u| self.apply_ops(ops, u, None, work, scratch),
                )
            })?;
        }
        Ok(())
    }

    /// Advances `u` with a source term given on every time level
    /// (`source.len() == nsteps + 1`). Returns all levels, starting with `u`.
    pub fn evolve_with_source(
        &self,
        u0: &[f64],
        source: &[Vec<f64>],
    ) -> Result<Vec<Vec<f64>>, FpeError> {
        self.check_len(u0)?;
        if source.len() != self.nsteps + 1 {
            return Err(FpeError::InvalidArgument(format!(
                "source has {} levels, expected {}",
                source.len(),
                self.nsteps + 1
            )));
        }
        let (mut work, mut scratch) = (Vec::new(), Vec::new());
        let mut levels = Vec::with_capacity(self.nsteps + 1);
        let mut u = u0.to_vec();
        levels.push(u.clone());
        for k in 0..self.nsteps {
            let g = Some((source[k].as_slice(), source[k + 1].as_slice()));
            self.with_ops(k, |ops| self.apply_ops(ops, &mut u, g, &mut work, &mut scratch))?;
            levels.push(u.clone());
        }
        Ok(levels)
    }

    /// Every time level of the evolution of `u0`, starting with `u0`.
    pub fn trajectory(&self, u0: &[f64]) -> Result<Vec<Vec<f64>>, FpeError> {
        self.check_len(u0)?;
        let (mut work, mut scratch) = (Vec::new(), Vec::new());
        let mut levels = Vec::with_capacity(self.nsteps + 1);
        let mut u = u0.to_vec();
        levels.push(u.clone());
        for k in 0..self.nsteps {
            self.with_ops(k, |ops| self.apply_ops(ops, &mut u, None, &mut work, &mut scratch))?;
            levels.push(u.clone());
        }
        Ok(levels)
    }
}

/// One step of length `dt` from `p.time`.
pub fn step(problem: &LinearProblem, p: &DensityField, dt: f64) -> Result<DensityField, FpeError> {
    if !(dt > 0.0) {
        return Err(FpeError::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let prop = Propagator::new(problem.clone(), p.time, p.time + dt, 1)?;
    let mut values = p.values.clone();
    prop.evolve(&mut values)?;
    Ok(DensityField {
        grid: p.grid,
        values,
        time: p.time + dt,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub mass: f64,
    pub min: f64,
    pub values: Vec<f64>,
}

/// Result of [`solve_ivp`]: requested snapshots plus the final state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub final_state: DensityField,
    pub initial_mass: f64,
    /// Largest `|mass(t_k) - mass(t_0)|` over all steps.
    pub max_mass_drift: f64,
    /// Smallest cell value seen over all steps.
    pub min_value: f64,
}

impl Trajectory {
    pub fn positivity_ok(&self) -> bool {
        self.min_value >= -POSITIVITY_TOL
    }
}

/// Integrates from `p0.time` to `t1` with `nsteps` steps. A snapshot is
/// recorded at the first step on or after each requested time.
pub fn solve_ivp(
    problem: &LinearProblem,
    p0: &DensityField,
    t1: f64,
    nsteps: usize,
    snapshot_times: &[f64],
) -> Result<Trajectory, FpeError> {
    if p0.grid != problem.grid {
        return Err(FpeError::InvalidArgument("density grid differs from problem grid".into()));
    }
    let prop = Propagator::new(problem.clone(), p0.time, t1, nsteps)?;
    let dx = problem.grid.dx();
    let mass = |u: &[f64]| u.iter().sum::<f64>() * dx;
    let mut times: Vec<f64> = snapshot_times.to_vec();
    times.sort_by(f64::total_cmp);
    let mut next = 0;
    let mut snapshots = Vec::new();
    let mut u = p0.values.clone();
    let m0 = mass(&u);
    let mut drift = 0.0f64;
    let mut min_value = p0.min();
    let (mut work, mut scratch) = (Vec::new(), Vec::new());
    let tol = 1e-9 * prop.dt();

    let record = |k: usize, u: &[f64], next: &mut usize, snaps: &mut Vec<Snapshot>| {
        let t = prop.time_at(k);
        while *next < times.len() && times[*next] <= t + tol {
            snaps.push(Snapshot {
                time: t,
                mass: mass(u),
                min: u.iter().copied().fold(f64::INFINITY, f64::min),
                values: u.to_vec(),
            });
            *next += 1;
        }
    };
    record(0, &u, &mut next, &mut snapshots);
    for k in 0..nsteps {
        prop.with_ops(k, |ops| prop.apply_ops(ops, &mut u, None, &mut work, &mut scratch))?;
        drift = drift.max((mass(&u) - m0).abs());
        min_value = u.iter().copied().fold(min_value, f64::min);
        record(k + 1, &u, &mut next, &mut snapshots);
    }
    Ok(Trajectory {
        snapshots,
        final_state: DensityField {
            grid: p0.grid,
            values: u,
            time: prop.time_at(nsteps),
        },
        initial_mass: m0,
        max_mass_drift: drift,
        min_value,
    })
}
