//! One-dimensional finite-volume solver for periodic Fokker-Planck equations.
//!
//! The density lives on cell centres. In divergence form the generator is
//! `L p = d/dx [ (a p)_x - b p ] - a0 p`, discretised through face fluxes so
//! that a zero-flux (reflecting) boundary conserves the discrete mass
//! `sum p_i dx` exactly. The non-divergence form `L u = a u_xx - b u_x - a0 u`
//! serves the periodic-parabolic eigenvalue and semilinear problems.
//!
//! `a` is the effective diffusion `sigma^2 / 2`.

mod solver;
mod stationary;
mod tridiag;

pub use solver::{solve_ivp, step, Propagator, Snapshot, Trajectory};
pub use stationary::{check_stationarity_condition, stationary_closed_form, StationarityReport};
pub use tridiag::Tridiag;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{CoefficientField, EvalError};

/// Lower bound for the density in Crank-Nicolson runs on probability data.
pub const POSITIVITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FpeError {
    #[error("diffusion {value} at (t = {t}, x = {x}) violates ellipticity")]
    EllipticityViolation { t: f64, x: f64, value: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("linear solver failure: {0}")]
    SolverFailure(String),
    #[error("closed-form exponent {exponent} at x = {x} exceeds 700")]
    QuadratureOverflow { x: f64, exponent: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    n_cells: usize,
    x_left: f64,
    x_right: f64,
}

impl Grid1D {
    pub fn new(n_cells: usize, x_left: f64, x_right: f64) -> Result<Self, FpeError> {
        if n_cells < 4 {
            return Err(FpeError::InvalidGrid(format!(
                "need at least 4 cells, got {n_cells}"
            )));
        }
        if !(x_left.is_finite() && x_right.is_finite() && x_right > x_left) {
            return Err(FpeError::InvalidGrid(format!(
                "bad interval ({x_left}, {x_right})"
            )));
        }
        Ok(Self {
            n_cells,
            x_left,
            x_right,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn x_left(&self) -> f64 {
        self.x_left
    }

    pub fn x_right(&self) -> f64 {
        self.x_right
    }

    pub fn dx(&self) -> f64 {
        (self.x_right - self.x_left) / self.n_cells as f64
    }

    pub fn length(&self) -> f64 {
        self.x_right - self.x_left
    }

    pub fn center(&self, i: usize) -> f64 {
        self.x_left + (i as f64 + 0.5) * self.dx()
    }

    /// Face `i` sits at the left edge of cell `i`; face `n` is `x_right`.
    pub fn face(&self, i: usize) -> f64 {
        if i == self.n_cells {
            self.x_right
        } else {
            self.x_left + i as f64 * self.dx()
        }
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.center(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub grid: Grid1D,
    pub values: Vec<f64>,
    pub time: f64,
}

impl DensityField {
    pub fn new(grid: Grid1D, values: Vec<f64>, time: f64) -> Result<Self, FpeError> {
        if values.len() != grid.n_cells() {
            return Err(FpeError::InvalidArgument(format!(
                "{} values for {} cells",
                values.len(),
                grid.n_cells()
            )));
        }
        Ok(Self { grid, values, time })
    }

    pub fn uniform(grid: Grid1D) -> Self {
        let v = 1.0 / grid.length();
        Self {
            grid,
            values: vec![v; grid.n_cells()],
            time: 0.0,
        }
    }

    pub fn from_fn(grid: Grid1D, time: f64, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid,
            values: grid.centers().into_iter().map(f).collect(),
            time,
        }
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.dx()
    }

    pub fn normalized(mut self) -> Self {
        let m = self.mass();
        if m != 0.0 {
            self.values.iter_mut().for_each(|v| *v /= m);
        }
        self
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_diff(&self, other: &DensityField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    /// Density vanishes on the boundary.
    Absorbing,
    /// Zero probability flux (divergence form) or zero normal derivative
    /// (non-divergence form).
    Reflecting,
    /// `du/dnu + beta u = 0` with separate `beta` at each end.
    Robin { left: f64, right: f64 },
}

impl BoundaryCondition {
    /// Ghost-cell factor `g` with `u_ghost = g * u_edge`.
    fn ghost_factor(self, dx: f64, right_end: bool) -> f64 {
        match self {
            BoundaryCondition::Absorbing => -1.0,
            BoundaryCondition::Reflecting => 1.0,
            BoundaryCondition::Robin { left, right } => {
                let beta = if right_end { right } else { left };
                (1.0 - 0.5 * beta * dx) / (1.0 + 0.5 * beta * dx)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Fokker-Planck flux form `((a p)_x - b p)_x`.
    #[default]
    Divergence,
    /// `a u_xx - b u_x`, i.e. minus the operator `-a d2 + b d`.
    NonDivergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    CrankNicolson,
    /// First order, sign preserving when the spatial operator is an M-matrix.
    ImplicitEuler,
}

/// Coefficients of the linear operator.
#[derive(Debug, Clone, PartialEq)]
pub struct FpCoefficients {
    /// Effective diffusion `a = sigma^2 / 2` (before `diffusion_scale`).
    pub diffusion: CoefficientField,
    pub drift: CoefficientField,
    pub zero_order: Option<CoefficientField>,
    /// Multiplies `diffusion`; 2.0 reproduces the `(sigma sigma^T p)_xx`
    /// form without the one-half.
    pub diffusion_scale: f64,
}

impl FpCoefficients {
    pub fn new(diffusion: CoefficientField, drift: CoefficientField) -> Self {
        Self {
            diffusion,
            drift,
            zero_order: None,
            diffusion_scale: 1.0,
        }
    }

    pub fn parse(diffusion: &str, drift: &str, period: Option<f64>) -> Result<Self, crate::expr::FieldError> {
        Ok(Self::new(
            CoefficientField::parse(diffusion, period)?,
            CoefficientField::parse(drift, period)?,
        ))
    }

    pub fn with_zero_order(mut self, a0: CoefficientField) -> Self {
        self.zero_order = Some(a0);
        self
    }

    pub fn a(&self, t: f64, x: f64) -> Result<f64, EvalError> {
        Ok(self.diffusion_scale * self.diffusion.eval(t, x)?)
    }

    pub fn b(&self, t: f64, x: f64) -> Result<f64, EvalError> {
        self.drift.eval(t, x)
    }

    pub fn a0(&self, t: f64, x: f64) -> Result<f64, EvalError> {
        match &self.zero_order {
            Some(f) => f.eval(t, x),
            None => Ok(0.0),
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        self.diffusion.is_time_dependent()
            || self.drift.is_time_dependent()
            || self.zero_order.as_ref().is_some_and(|f| f.is_time_dependent())
    }
}

/// Everything needed to evolve the linear problem `du/dt = L(t) u - shift u`.
#[derive(Debug, Clone)]
pub struct LinearProblem {
    pub grid: Grid1D,
    pub coeffs: FpCoefficients,
    pub bc: BoundaryCondition,
    pub convention: Convention,
    pub integrator: Integrator,
    /// Constant added to the zero-order term.
    pub shift: f64,
    /// Diffusion must stay at or above this value; 0 allows frozen dynamics.
    pub ellipticity_floor: f64,
}

pub const DEFAULT_ELLIPTICITY_FLOOR: f64 = 1e-12;

impl LinearProblem {
    pub fn new(grid: Grid1D, coeffs: FpCoefficients, bc: BoundaryCondition) -> Self {
        Self {
            grid,
            coeffs,
            bc,
            convention: Convention::Divergence,
            integrator: Integrator::CrankNicolson,
            shift: 0.0,
            ellipticity_floor: DEFAULT_ELLIPTICITY_FLOOR,
        }
    }

    pub fn with_convention(mut self, convention: Convention) -> Self {
        self.convention = convention;
        self
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        self
    }

    pub fn with_ellipticity_floor(mut self, floor: f64) -> Self {
        self.ellipticity_floor = floor;
        self
    }

    fn check_ellipticity(&self, t: f64, x: f64, a: f64) -> Result<(), FpeError> {
        let ok = if self.ellipticity_floor > 0.0 {
            a >= self.ellipticity_floor
        } else {
            a >= 0.0
        };
        if ok && a.is_finite() {
            Ok(())
        } else {
            Err(FpeError::EllipticityViolation { t, x, value: a })
        }
    }

    /// Transport-diffusion part of the generator at time `t`, without the
    /// zero-order term.
    pub fn assemble_transport(&self, t: f64) -> Result<Tridiag, FpeError> {
        let grid = &self.grid;
        let n = grid.n_cells();
        let dx = grid.dx();
        let coeffs = &self.coeffs;
        let mut l = Tridiag::zeros(n);

        let mut a_c = Vec::with_capacity(n);
        for i in 0..n {
            let x = grid.center(i);
            let a = coeffs.a(t, x)?;
            self.check_ellipticity(t, x, a)?;
            a_c.push(a);
        }
        let gl = self.bc.ghost_factor(dx, false);
        let gr = self.bc.ghost_factor(dx, true);

        match self.convention {
            Convention::Divergence => {
                // J_f = alpha p_left + beta p_right on interior faces
                for f in 1..n {
                    let bf = coeffs.b(t, grid.face(f))?;
                    let alpha = -a_c[f - 1] / dx - 0.5 * bf;
                    let beta = a_c[f] / dx - 0.5 * bf;
                    let (i, j) = (f - 1, f);
                    l.diag[i] += alpha / dx;
                    l.upper[i] += beta / dx;
                    l.lower[j] -= alpha / dx;
                    l.diag[j] -= beta / dx;
                }
                if self.bc != BoundaryCondition::Reflecting {
                    let xl = grid.x_left();
                    let af = coeffs.a(t, xl)?;
                    self.check_ellipticity(t, xl, af)?;
                    let bf = coeffs.b(t, xl)?;
                    // ghost diffusion by linear extrapolation through the face
                    let a_ghost = 2.0 * af - a_c[0];
                    let kappa = (a_c[0] - a_ghost * gl) / dx - 0.5 * bf * (1.0 + gl);
                    l.diag[0] -= kappa / dx;

                    let xr = grid.x_right();
                    let af = coeffs.a(t, xr)?;
                    self.check_ellipticity(t, xr, af)?;
                    let bf = coeffs.b(t, xr)?;
                    let a_ghost = 2.0 * af - a_c[n - 1];
                    let kappa = (a_ghost * gr - a_c[n - 1]) / dx - 0.5 * bf * (1.0 + gr);
                    l.diag[n - 1] += kappa / dx;
                }
            }
            Convention::NonDivergence => {
                let dx2 = dx * dx;
                for i in 0..n {
                    let x = grid.center(i);
                    let b = coeffs.b(t, x)?;
                    let west = a_c[i] / dx2 + 0.5 * b / dx;
                    let east = a_c[i] / dx2 - 0.5 * b / dx;
                    l.diag[i] -= 2.0 * a_c[i] / dx2;
                    if i > 0 {
                        l.lower[i] += west;
                    } else {
                        l.diag[i] += west * gl;
                    }
                    if i + 1 < n {
                        l.upper[i] += east;
                    } else {
                        l.diag[i] += east * gr;
                    }
                }
            }
        }
        Ok(l)
    }

    /// `a0(t, x_i)` on cell centres.
    pub fn zero_order_profile(&self, t: f64) -> Result<Vec<f64>, FpeError> {
        (0..self.grid.n_cells())
            .map(|i| Ok(self.coeffs.a0(t, self.grid.center(i))?))
            .collect()
    }

    /// Generator without the constant shift.
    pub fn assemble_unshifted(&self, t: f64) -> Result<Tridiag, FpeError> {
        let mut l = self.assemble_transport(t)?;
        if self.coeffs.zero_order.is_some() {
            for (d, c) in l.diag.iter_mut().zip(self.zero_order_profile(t)?) {
                *d -= c;
            }
        }
        Ok(l)
    }

    /// Full generator `L(t) - shift` including the zero-order term.
    pub fn assemble_generator(&self, t: f64) -> Result<Tridiag, FpeError> {
        let mut l = self.assemble_unshifted(t)?;
        for d in l.diag.iter_mut() {
            *d -= self.shift;
        }
        Ok(l)
    }
}

/// Generator of the Fokker-Planck flux form at time `t`.
pub fn assemble_generator(
    grid: Grid1D,
    coeffs: &FpCoefficients,
    t: f64,
    bc: BoundaryCondition,
) -> Result<Tridiag, FpeError> {
    LinearProblem::new(grid, coeffs.clone(), bc).assemble_generator(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coeffs(a: &str, b: &str) -> FpCoefficients {
        FpCoefficients::parse(a, b, Some(1.0)).unwrap()
    }

    #[test]
    fn interior_rows_are_the_laplacian() {
        let grid = Grid1D::new(10, 0.0, 1.0).unwrap();
        let dx2 = grid.dx() * grid.dx();
        for convention in [Convention::Divergence, Convention::NonDivergence] {
            let l = LinearProblem::new(grid, coeffs("1", "0"), BoundaryCondition::Reflecting)
                .with_convention(convention)
                .assemble_generator(0.0)
                .unwrap();
            for i in 1..9 {
                assert!((l.lower[i] * dx2 - 1.0).abs() < 1e-12);
                assert!((l.diag[i] * dx2 + 2.0).abs() < 1e-12);
                assert!((l.upper[i] * dx2 - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reflecting_columns_sum_to_zero() {
        let grid = Grid1D::new(37, -1.0, 2.0).unwrap();
        let c = coeffs("1 + 0.5*sin(2*pi*t)*x^2", "sin(2*pi*t)*(1 - 2*x) + x^3");
        for t in [0.0, 0.13, 0.5] {
            let l = assemble_generator(grid, &c, t, BoundaryCondition::Reflecting).unwrap();
            let d = l.to_dense();
            let scale = d.abs().max();
            for j in 0..grid.n_cells() {
                let s: f64 = d.column(j).iter().sum();
                assert!(s.abs() <= 1e-13 * scale, "column {j}: {s}");
            }
        }
    }

    #[test]
    fn neumann_rows_annihilate_constants() {
        let grid = Grid1D::new(20, 0.0, 1.0).unwrap();
        let l = LinearProblem::new(grid, coeffs("1 + x", "cos(x)"), BoundaryCondition::Reflecting)
            .with_convention(Convention::NonDivergence)
            .assemble_generator(0.3)
            .unwrap();
        let mut out = vec![0.0; 20];
        l.apply(&[1.0; 20], &mut out);
        assert!(out.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn ellipticity_is_enforced() {
        let grid = Grid1D::new(8, 0.0, 1.0).unwrap();
        let err = assemble_generator(grid, &coeffs("x - 0.5", "0"), 0.0, BoundaryCondition::Reflecting)
            .unwrap_err();
        assert!(matches!(err, FpeError::EllipticityViolation { .. }));
        let frozen = LinearProblem::new(grid, coeffs("0", "0"), BoundaryCondition::Reflecting)
            .with_ellipticity_floor(0.0)
            .assemble_generator(0.0)
            .unwrap();
        assert!(frozen.diag.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn grid_validation() {
        assert!(Grid1D::new(3, 0.0, 1.0).is_err());
        assert!(Grid1D::new(4, 1.0, 1.0).is_err());
        let g = Grid1D::new(4, 0.0, 1.0).unwrap();
        assert_eq!(g.centers(), vec![0.125, 0.375, 0.625, 0.875]);
    }
}
