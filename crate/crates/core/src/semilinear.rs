//! Time-periodic solutions of `u_t + A(t) u = f(t, x, u)` by monotone
//! iteration between an ordered lower and upper solution.
//!
//! `A(t) u = -a u_xx + b u_x + a0 u` with the boundary operator of the
//! chosen [`BoundaryCondition`]. Each sweep solves the linear periodic
//! problem `v_t + (A + c) v = f(t, x, u_k) + c u_k` through the period map:
//! `(I - K_c) v(0) = w`, where `w` is the one-period response to zero data.

use nalgebra::{DMatrix, DVector, Dyn, LU};
use serde::Serialize;
use thiserror::Error;

use crate::expr::{BinOp, CoefficientField, EvalError, Expr, Var};
use crate::fpe::{
    BoundaryCondition, Convention, FpCoefficients, FpeError, Grid1D, Integrator, LinearProblem,
    Propagator, DEFAULT_ELLIPTICITY_FLOOR,
};
use crate::period_map::{build_period_map, power_iteration, PeriodMapError};

/// Periodic problems with `spr(K) >= 1 - SINGULAR_MARGIN` are rejected.
pub const SINGULAR_MARGIN: f64 = 1e-8;
pub const MONOTONE_SLACK: f64 = 1e-10;
pub const DEFAULT_LOWER_EPSILON: f64 = 1e-3;
/// Safety factor on the sampled `sup |f_u|`.
pub const SHIFT_MARGIN: f64 = 1.5;
const LATTICE: usize = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SemilinearError {
    #[error(transparent)]
    Fpe(#[from] FpeError),
    #[error(transparent)]
    PeriodMap(#[from] PeriodMapError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("periodic problem is singular: spectral radius {spr} of the period map")]
    SingularSystem { spr: f64 },
    #[error("monotone iteration did not converge after {iterations} iterations (last change {delta:e})")]
    NotConverged { iterations: usize, delta: f64 },
    #[error("monotonicity violated by {amount:e} at iteration {iteration}; the shift c is too small")]
    MonotonicityViolation { iteration: usize, amount: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone)]
pub struct SemilinearProblem {
    pub grid: Grid1D,
    /// Diffusion `a`, drift `b` and zero-order `a0` of `A(t)`.
    pub coeffs: FpCoefficients,
    /// `f(t, x, u)`.
    pub source: CoefficientField,
    pub bc: BoundaryCondition,
    pub period: f64,
    /// Time steps per period.
    pub nsteps: usize,
    pub integrator: Integrator,
}

impl SemilinearProblem {
    pub fn new(
        grid: Grid1D,
        coeffs: FpCoefficients,
        source: CoefficientField,
        bc: BoundaryCondition,
        period: f64,
        nsteps: usize,
    ) -> Result<Self, SemilinearError> {
        if !(period > 0.0 && period.is_finite()) || nsteps == 0 {
            return Err(SemilinearError::InvalidArgument(format!(
                "need a positive period and step count, got {period} and {nsteps}"
            )));
        }
        Ok(Self {
            grid,
            coeffs,
            source: source.with_period(period),
            bc,
            period,
            nsteps,
            integrator: Integrator::CrankNicolson,
        })
    }

    /// The linear operator `-(A + c)` as a generator. `c` joins the
    /// zero-order term, so it is time-stepped together with `A` and the
    /// discrete periodic problem stays consistent with the elliptic one.
    pub fn linear(&self, c: f64) -> LinearProblem {
        let mut coeffs = self.coeffs.clone();
        if c != 0.0 {
            let a0 = match &coeffs.zero_order {
                Some(a0) => a0.expr().clone(),
                None => Expr::num(0.0),
            };
            coeffs.zero_order = Some(CoefficientField::from_expr(
                Expr::binary(BinOp::Add, a0, Expr::num(c)),
                Some(self.period),
            ));
        }
        LinearProblem::new(self.grid, coeffs, self.bc)
            .with_convention(Convention::NonDivergence)
            .with_integrator(self.integrator)
            .with_ellipticity_floor(DEFAULT_ELLIPTICITY_FLOOR)
    }

    pub fn dt(&self) -> f64 {
        self.period / self.nsteps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.nsteps {
            self.period
        } else {
            k as f64 * self.dt()
        }
    }

    fn f(&self, t: f64, x: f64, u: f64) -> Result<f64, EvalError> {
        self.source.eval_u(t, x, u)
    }

    fn sample_times(&self) -> Vec<f64> {
        (0..LATTICE).map(|k| self.period * k as f64 / LATTICE as f64).collect()
    }

    fn sample_points(&self) -> Vec<f64> {
        let n = self.grid.n_cells();
        let stride = n.div_ceil(LATTICE).max(1);
        let mut xs: Vec<f64> = (0..n).step_by(stride).map(|i| self.grid.center(i)).collect();
        xs.push(self.grid.center(n - 1));
        xs.dedup();
        xs
    }

    /// `f(t_k, x_i, u[k][i]) + c u[k][i]` on every time level.
    fn sweep_source(&self, u: &[Vec<f64>], c: f64) -> Result<Vec<Vec<f64>>, SemilinearError> {
        let centers = self.grid.centers();
        u.iter()
            .enumerate()
            .map(|(k, level)| {
                let t = self.time(k);
                level
                    .iter()
                    .zip(&centers)
                    .map(|(&v, &x)| Ok(self.f(t, x, v)? + c * v))
                    .collect()
            })
            .collect()
    }

    /// Time-constant trajectory built from a profile.
    pub fn constant_in_time(&self, profile: &[f64]) -> Vec<Vec<f64>> {
        vec![profile.to_vec(); self.nsteps + 1]
    }
}

/// Factorised `I - K` for repeated periodic solves with the same operator.
pub struct PeriodicSolver {
    prop: Propagator,
    lu: LU<f64, Dyn, Dyn>,
    spr: f64,
}

impl PeriodicSolver {
    pub fn new(linear: &LinearProblem, period: f64, nsteps: usize) -> Result<Self, SemilinearError> {
        let map = build_period_map(linear, period, nsteps)?;
        let spr = match power_iteration(&map, 1e-12, 20_000) {
            Ok(s) => s.r,
            Err(_) => map
                .dense_spectral_radius()
                .unwrap_or_else(|| map.k.clone().complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)),
        };
        if spr >= 1.0 - SINGULAR_MARGIN {
            return Err(SemilinearError::SingularSystem { spr });
        }
        let n = map.dim();
        let lu = (DMatrix::identity(n, n) - map.k).lu();
        Ok(Self {
            prop: Propagator::new(linear.clone(), 0.0, period, nsteps)?,
            lu,
            spr,
        })
    }

    pub fn spectral_radius(&self) -> f64 {
        self.spr
    }

    /// Periodic solution for the source given on every time level.
    pub fn solve(&self, source: &[Vec<f64>]) -> Result<PeriodicSolution, SemilinearError> {
        let n = self.lu.l().nrows();
        let response = self.prop.evolve_with_source(&vec![0.0; n], source)?;
        let w = DVector::from_column_slice(response.last().expect("at least one level"));
        let u0 = self
            .lu
            .solve(&w)
            .ok_or(SemilinearError::SingularSystem { spr: self.spr })?;
        let levels = self.prop.evolve_with_source(u0.as_slice(), source)?;
        let residual = levels[0]
            .iter()
            .zip(levels.last().expect("levels"))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        Ok(PeriodicSolution { levels, residual })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicSolution {
    /// Values on every time level `0, dt, ..., T`.
    pub levels: Vec<Vec<f64>>,
    /// `||u(T) - u(0)||_inf`.
    pub residual: f64,
}

impl PeriodicSolution {
    pub fn initial(&self) -> &[f64] {
        &self.levels[0]
    }
}

/// Periodic solution of `u_t + (A + shift) u = g` with `g` given per level.
pub fn poincare_solve(
    problem: &SemilinearProblem,
    shift: f64,
    source: &[Vec<f64>],
) -> Result<PeriodicSolution, SemilinearError> {
    PeriodicSolver::new(&problem.linear(shift), problem.period, problem.nsteps)?.solve(source)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Upper,
    Lower,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlackReport {
    pub kind: Kind,
    /// Minimum over interior points and time steps of the differential
    /// inequality slack.
    pub interior: f64,
    /// Minimum slack of the boundary inequality over time levels.
    pub boundary: f64,
    /// Slack of `u(0) >= u(T)` (upper) or `u(0) <= u(T)` (lower).
    pub endpoint: f64,
}

impl SlackReport {
    pub fn min(&self) -> f64 {
        self.interior.min(self.boundary).min(self.endpoint)
    }

    pub fn certified(&self, tol: f64) -> bool {
        self.min() >= -tol
    }
}

/// Slacks of the upper/lower solution inequalities for a candidate given on
/// every time level. Nonnegative slacks certify the candidate.
pub fn verify_upper_lower(
    problem: &SemilinearProblem,
    candidate: &[Vec<f64>],
    kind: Kind,
) -> Result<SlackReport, SemilinearError> {
    let n = problem.grid.n_cells();
    if candidate.len() != problem.nsteps + 1 || candidate.iter().any(|l| l.len() != n) {
        return Err(SemilinearError::InvalidArgument(format!(
            "candidate must have {} levels of {n} values",
            problem.nsteps + 1
        )));
    }
    let sign = match kind {
        Kind::Upper => 1.0,
        Kind::Lower => -1.0,
    };
    let linear = problem.linear(0.0);
    let centers = problem.grid.centers();
    let dt = problem.dt();
    let mut interior = f64::INFINITY;
    let mut lu = vec![0.0; n];
    for k in 0..problem.nsteps {
        let (t0, t1) = (problem.time(k), problem.time(k + 1));
        let l = linear.assemble_generator(0.5 * (t0 + t1))?;
        let mid: Vec<f64> = candidate[k]
            .iter()
            .zip(&candidate[k + 1])
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        l.apply(&mid, &mut lu);
        for i in 0..n {
            let ut = (candidate[k + 1][i] - candidate[k][i]) / dt;
            let f = 0.5
                * (problem.f(t0, centers[i], candidate[k][i])?
                    + problem.f(t1, centers[i], candidate[k + 1][i])?);
            // u_t + A u - f with A = -L
            interior = interior.min(sign * (ut - lu[i] - f));
        }
    }

    let dx = problem.grid.dx();
    let mut boundary = f64::INFINITY;
    for level in candidate {
        let (first, last) = (level[0], level[n - 1]);
        let b = match problem.bc {
            BoundaryCondition::Absorbing => first.min(last),
            BoundaryCondition::Reflecting => {
                let left = -(level[1] - first) / dx;
                let right = (last - level[n - 2]) / dx;
                left.min(right)
            }
            BoundaryCondition::Robin { left, right } => {
                let l = -(level[1] - first) / dx + left * first;
                let r = (last - level[n - 2]) / dx + right * last;
                l.min(r)
            }
        };
        let b = match (problem.bc, kind) {
            (BoundaryCondition::Absorbing, _) => sign * b,
            (_, Kind::Upper) => b,
            (_, Kind::Lower) => {
                // the lower inequality must hold at both ends
                let worst = match problem.bc {
                    BoundaryCondition::Reflecting => {
                        (-(level[1] - first) / dx).max((last - level[n - 2]) / dx)
                    }
                    BoundaryCondition::Robin { left, right } => (-(level[1] - first) / dx
                        + left * first)
                        .max((last - level[n - 2]) / dx + right * last),
                    BoundaryCondition::Absorbing => unreachable!(),
                };
                -worst
            }
        };
        boundary = boundary.min(b);
    }
    if problem.bc == BoundaryCondition::Absorbing && kind == Kind::Lower {
        // lower solutions need u <= 0 on the boundary: use the larger end
        boundary = candidate
            .iter()
            .map(|l| -(l[0].max(l[n - 1])))
            .fold(f64::INFINITY, f64::min);
    }

    let endpoint = candidate[0]
        .iter()
        .zip(&candidate[problem.nsteps])
        .map(|(a, b)| sign * (a - b))
        .fold(f64::INFINITY, f64::min);
    Ok(SlackReport {
        kind,
        interior,
        boundary,
        endpoint,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderedPair {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl OrderedPair {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, SemilinearError> {
        if lower.len() != upper.len() {
            return Err(SemilinearError::InvalidArgument("profiles differ in length".into()));
        }
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] <= upper[i])) {
            return Err(SemilinearError::InvalidArgument(format!(
                "lower exceeds upper at cell {i}: {} > {}",
                lower[i], upper[i]
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }
}

/// Default pair for logistic-type sources: `upper = 2 M0` with
/// `f(t, x, M0) <= 0` on the sample lattice, `lower = eps * phi` with `phi`
/// the principal eigenfunction of the problem linearised at `u = 0`
/// (scaled to maximum one).
pub fn default_pair(problem: &SemilinearProblem, eps: f64) -> Result<(OrderedPair, f64), SemilinearError> {
    let ts = problem.sample_times();
    let xs = problem.sample_points();
    let nonpositive = |m: f64| -> Result<bool, SemilinearError> {
        for &t in &ts {
            for &x in &xs {
                if problem.f(t, x, m)? > 0.0 {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    };
    let mut hi = 1.0;
    while !nonpositive(hi)? {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(SemilinearError::InvalidArgument(
                "no constant upper bound found: f stays positive".into(),
            ));
        }
    }
    let mut lo = if hi > 1.0 { hi / 2.0 } else { 0.0 };
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if nonpositive(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let m0 = hi;

    let phi = linearised_eigenfunction(problem)?;
    let lower: Vec<f64> = phi.iter().map(|p| eps * p).collect();
    let upper = vec![2.0 * m0; problem.grid.n_cells()];
    Ok((OrderedPair::new(lower, upper)?, m0))
}

/// Principal eigenvector at `t = 0` of the period map of
/// `u_t + A u - f_u(t, x, 0) u = 0`, nonnegative with maximum one.
pub fn linearised_eigenfunction(problem: &SemilinearProblem) -> Result<Vec<f64>, SemilinearError> {
    let h = 1e-6;
    let f = problem.source.expr();
    // one-sided difference keeps sqrt/log sources evaluable
    let fu = Expr::binary(
        BinOp::Div,
        Expr::binary(BinOp::Sub, f.substitute(Var::U, h), f.substitute(Var::U, 0.0)),
        Expr::num(h),
    );
    let a0 = match &problem.coeffs.zero_order {
        Some(a0) => a0.expr().clone(),
        None => Expr::num(0.0),
    };
    let shifted = CoefficientField::from_expr(Expr::binary(BinOp::Sub, a0, fu), Some(problem.period));
    let mut coeffs = problem.coeffs.clone();
    coeffs.zero_order = Some(shifted);
    let linear = LinearProblem::new(problem.grid, coeffs, problem.bc)
        .with_convention(Convention::NonDivergence)
        .with_integrator(problem.integrator);
    let map = build_period_map(&linear, problem.period, problem.nsteps)?;
    let spec = power_iteration(&map, 1e-10, 100_000)?;
    let top = spec.eigvec.iter().copied().fold(0.0, f64::max);
    Ok(spec.eigvec.iter().map(|v| (v / top).max(0.0)).collect())
}

/// `SHIFT_MARGIN * sup |f_u|` over a 32 x 32 lattice in `(t, u)` on
/// `[umin, umax]`, at up to 32 grid points; never below `1 / T`.
pub fn estimate_shift(problem: &SemilinearProblem, umin: f64, umax: f64) -> Result<f64, SemilinearError> {
    let ts = problem.sample_times();
    let xs = problem.sample_points();
    let mut sup = 0.0f64;
    for j in 0..LATTICE {
        let u = umin + (umax - umin) * j as f64 / (LATTICE - 1) as f64;
        let h = 1e-6 * u.abs().max(1.0);
        for &t in &ts {
            for &x in &xs {
                let d = (problem.f(t, x, u + h)? - problem.f(t, x, u - h)?) / (2.0 * h);
                sup = sup.max(d.abs());
            }
        }
    }
    Ok((SHIFT_MARGIN * sup).max(1.0 / problem.period))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonotoneOptions {
    /// Shift `c`; estimated when `None`.
    pub c: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MonotoneOptions {
    fn default() -> Self {
        Self {
            c: None,
            tol: 1e-8,
            max_iter: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub start: Kind,
    pub iteration: usize,
    /// `sup_t ||u_{k+1} - u_k||_inf`.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneResult {
    pub from_upper: PeriodicSolution,
    pub from_lower: PeriodicSolution,
    /// `sup_t ||u_upper - u_lower||_inf` of the two limits.
    pub gap: f64,
    pub c: f64,
    pub trace: Vec<TraceEntry>,
    /// Largest amount by which an iterate left `[lower, upper]`.
    pub sandwich_violation: f64,
    pub warnings: Vec<String>,
}

impl MonotoneResult {
    pub fn periodicity_residual(&self) -> f64 {
        self.from_upper.residual.max(self.from_lower.residual)
    }
}

fn sup_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

fn boundary_warnings(problem: &SemilinearProblem) -> Result<Vec<String>, SemilinearError> {
    let mut out = Vec::new();
    if problem.bc != BoundaryCondition::Absorbing {
        return Ok(out);
    }
    let ends = [problem.grid.x_left(), problem.grid.x_right()];
    let worst = problem
        .sample_times()
        .iter()
        .flat_map(|&t| ends.iter().map(move |&x| (t, x)))
        .map(|(t, x)| problem.f(t, x, 0.0).map(f64::abs))
        .try_fold(0.0f64, |m, v| v.map(|v| m.max(v)))?;
    if worst > 1e-12 {
        out.push(format!(
            "f(t, x, 0) does not vanish on the absorbing boundary (max |f| = {worst:e})"
        ));
    }
    Ok(out)
}

/// Iterates from both ends of `pair` until successive sweeps differ by at
/// most `tol` and the a posteriori bound `delta * rho / (1 - rho)` from the
/// observed contraction `rho` is at most `tol / 2`.
pub fn monotone_iterate(
    problem: &SemilinearProblem,
    pair: &OrderedPair,
    opts: MonotoneOptions,
) -> Result<MonotoneResult, SemilinearError> {
    let n = problem.grid.n_cells();
    if pair.lower.len() != n {
        return Err(SemilinearError::InvalidArgument(format!(
            "profiles of length {} on {n} cells",
            pair.lower.len()
        )));
    }
    let umin = pair.lower.iter().copied().fold(f64::INFINITY, f64::min);
    let umax = pair.upper.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let c = match opts.c {
        Some(c) => c,
        None => estimate_shift(problem, umin, umax)?,
    };
    let solver = PeriodicSolver::new(&problem.linear(c), problem.period, problem.nsteps)?;
    let warnings = boundary_warnings(problem)?;

    let lower_bound = problem.constant_in_time(&pair.lower);
    let upper_bound = problem.constant_in_time(&pair.upper);
    let mut trace = Vec::new();
    let mut sandwich = 0.0f64;

    let mut run = |start: Kind| -> Result<PeriodicSolution, SemilinearError> {
        let sign = match start {
            Kind::Upper => 1.0,
            Kind::Lower => -1.0,
        };
        let mut u = match start {
            Kind::Upper => upper_bound.clone(),
            Kind::Lower => lower_bound.clone(),
        };
        let mut prev_delta = f64::INFINITY;
        for iteration in 1..=opts.max_iter {
            let g = problem.sweep_source(&u, c)?;
            let next = solver.solve(&g)?;
            let mut delta = 0.0f64;
            let mut violation = 0.0f64;
            for (a, b) in u.iter().zip(&next.levels) {
                for (old, new) in a.iter().zip(b) {
                    delta = delta.max((new - old).abs());
                    // from above iterates decrease, from below they increase
                    violation = violation.max(sign * (new - old) - MONOTONE_SLACK * old.abs().max(1.0));
                }
            }
            if violation > 0.0 {
                return Err(SemilinearError::MonotonicityViolation {
                    iteration,
                    amount: violation,
                });
            }
            for (k, level) in next.levels.iter().enumerate() {
                for (i, v) in level.iter().enumerate() {
                    sandwich = sandwich
                        .max(lower_bound[k][i] - v)
                        .max(v - upper_bound[k][i]);
                }
            }
            trace.push(TraceEntry {
                start,
                iteration,
                delta,
            });
            let rho = delta / prev_delta;
            let tail = if rho < 1.0 { delta * rho / (1.0 - rho) } else { f64::INFINITY };
            if delta == 0.0 || (delta <= opts.tol && tail <= 0.5 * opts.tol) {
                return Ok(next);
            }
            prev_delta = delta;
            u = next.levels;
        }
        Err(SemilinearError::NotConverged {
            iterations: opts.max_iter,
            delta: prev_delta,
        })
    };
    let from_upper = run(Kind::Upper)?;
    let from_lower = run(Kind::Lower)?;
    let gap = sup_diff(&from_upper.levels, &from_lower.levels);
    Ok(MonotoneResult {
        from_upper,
        from_lower,
        gap,
        c,
        trace,
        sandwich_violation: sandwich,
        warnings,
    })
}
