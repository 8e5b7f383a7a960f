//! Monodromy (period) map `K = U(T, 0)` of a periodic linear problem and its
//! principal eigenpair.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::fpe::{FpeError, Grid1D, LinearProblem, Propagator};

pub const DEFAULT_POWER_TOL: f64 = 1e-10;
pub const DEFAULT_POWER_MAX_ITER: usize = 100_000;
/// Decay checks stop once `r^n` drops below this.
pub const DECAY_FLOOR: f64 = 1e-280;
/// Dense eigenvalue cross-checks are limited to this size.
pub const DENSE_CHECK_MAX: usize = 256;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PeriodMapError {
    #[error(transparent)]
    Fpe(#[from] FpeError),
    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("spectral radius {r} is not positive")]
    NonPositiveRadius { r: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone)]
pub struct PeriodMap {
    pub k: DMatrix<f64>,
    pub grid: Grid1D,
    pub period: f64,
    pub dt: f64,
}

impl PeriodMap {
    /// Wraps an explicit matrix; `grid` only fixes the cell width used to
    /// normalise eigenvectors.
    pub fn from_matrix(k: DMatrix<f64>, grid: Grid1D, period: f64) -> Result<Self, PeriodMapError> {
        if k.nrows() != k.ncols() || k.nrows() != grid.n_cells() {
            return Err(PeriodMapError::InvalidArgument(format!(
                "{}x{} matrix for {} cells",
                k.nrows(),
                k.ncols(),
                grid.n_cells()
            )));
        }
        Ok(Self {
            k,
            grid,
            period,
            dt: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.k.nrows()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        self.k.column_iter().map(|c| c.sum()).collect()
    }

    pub fn min_entry(&self) -> f64 {
        self.k.min()
    }

    /// Largest eigenvalue modulus from a dense Schur decomposition.
    pub fn dense_spectral_radius(&self) -> Option<f64> {
        if self.dim() > DENSE_CHECK_MAX {
            return None;
        }
        let eig = self.k.clone().complex_eigenvalues();
        Some(eig.iter().map(|z| z.norm()).fold(0.0, f64::max))
    }
}

/// Propagator matrix over `[t0, t1]`: column `j` is the evolution of the
/// `j`-th unit vector.
pub fn build_propagator_matrix(
    problem: &LinearProblem,
    t0: f64,
    t1: f64,
    nsteps: usize,
) -> Result<DMatrix<f64>, PeriodMapError> {
    let n = problem.grid.n_cells();
    let prop = Propagator::new(problem.clone(), t0, t1, nsteps)?;
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    prop.evolve_many(&mut cols)?;
    Ok(DMatrix::from_fn(n, n, |i, j| cols[j][i]))
}

/// `K = U(T, 0)` with `nsteps` steps per period.
pub fn build_period_map(
    problem: &LinearProblem,
    period: f64,
    nsteps: usize,
) -> Result<PeriodMap, PeriodMapError> {
    let k = build_propagator_matrix(problem, 0.0, period, nsteps)?;
    Ok(PeriodMap {
        k,
        grid: problem.grid,
        period,
        dt: period / nsteps as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralResult {
    pub r: f64,
    pub mu: f64,
    /// Normalised to unit discrete mass `sum v_i dx = 1`.
    pub eigvec: Vec<f64>,
    pub iterations: usize,
    /// `||K v - r v||_inf / (max(r, 1) ||v||_inf)`.
    pub residual: f64,
}

/// Dominant eigenpair from a uniform start, stopping when the Rayleigh
/// residual falls to `tol`. Residuals are relative once `r > 1`, otherwise
/// roundoff in `K v` alone exceeds any fixed tolerance for large radii.
pub fn power_iteration(
    map: &PeriodMap,
    tol: f64,
    max_iter: usize,
) -> Result<SpectralResult, PeriodMapError> {
    let n = map.dim();
    let mut v = DVector::from_element(n, 1.0);
    let mut residual = f64::INFINITY;
    let mut r = 0.0;
    let mut iterations = 0;
    for it in 1..=max_iter {
        iterations = it;
        let w = &map.k * &v;
        r = v.dot(&w) / v.dot(&v);
        residual = (&w - r * &v).amax() / (r.abs().max(1.0) * v.amax());
        let norm = w.amax();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(PeriodMapError::NonPositiveRadius { r: norm });
        }
        if residual <= tol {
            break;
        }
        v = w / norm;
    }
    if residual > tol {
        return Err(PeriodMapError::NotConverged {
            iterations,
            residual,
        });
    }
    if !(r > 0.0) {
        return Err(PeriodMapError::NonPositiveRadius { r });
    }
    let peak = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    if peak < 0.0 {
        v.neg_mut();
    }
    let mass = v.sum() * map.grid.dx();
    let scale = if mass > 0.0 { mass } else { v.amax() };
    let eigvec: Vec<f64> = v.iter().map(|x| x / scale).collect();
    Ok(SpectralResult {
        r,
        mu: -r.ln() / map.period,
        eigvec,
        iterations,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub max_relative_error: f64,
    pub periods_checked: usize,
    /// Set when `r^n` reached the floating-point floor before `n_periods`.
    pub truncated: bool,
}

/// `max_n ||K^n p0 - r^n p0|| / ||r^n p0||` with `p0` the principal
/// eigenvector.
pub fn decay_check(map: &PeriodMap, spec: &SpectralResult, n_periods: usize) -> DecayReport {
    let p0 = DVector::from_column_slice(&spec.eigvec);
    let base = p0.amax();
    let mut p = p0.clone();
    let mut rn = 1.0;
    let mut worst = 0.0f64;
    for n in 1..=n_periods {
        rn *= spec.r;
        if rn < DECAY_FLOOR {
            return DecayReport {
                max_relative_error: worst,
                periods_checked: n - 1,
                truncated: true,
            };
        }
        p = &map.k * &p;
        let err = (&p - rn * &p0).amax() / (rn * base);
        worst = worst.max(err);
    }
    DecayReport {
        max_relative_error: worst,
        periods_checked: n_periods,
        truncated: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lambda1 {
    pub lambda1: f64,
    pub spectral: SpectralResult,
}

/// Principal periodic eigenvalue `lambda_1 = -ln(spr K) / T` of
/// `u_t + A(t) u = 0`, with `A` the negative of the problem's generator.
pub fn lambda1(
    problem: &LinearProblem,
    period: f64,
    nsteps: usize,
    tol: f64,
) -> Result<Lambda1, PeriodMapError> {
    let map = build_period_map(problem, period, nsteps)?;
    let spectral = power_iteration(&map, tol, DEFAULT_POWER_MAX_ITER)?;
    Ok(Lambda1 {
        lambda1: spectral.mu,
        spectral,
    })
}
