//! Time-independent stationary density of a periodic reflecting problem.

use periodic_fpe::fpe::{
    check_stationarity_condition, solve_ivp, stationary_closed_form, BoundaryCondition, DensityField, FpCoefficients,
    Grid1D, LinearProblem,
};

fn main() {
    let grid = Grid1D::new(200, -1.0, 1.0).unwrap();
    // a and b share the same time factor, so (b - a_x)/a does not depend on t
    let coeffs = FpCoefficients::parse("(1 + 0.5*sin(2*pi*t))*0.2", "-(1 + 0.5*sin(2*pi*t))*x", Some(1.0)).unwrap();
    let times: Vec<f64> = (0..32).map(|k| k as f64 / 32.0).collect();
    let report = check_stationarity_condition(&coeffs, grid, &times).unwrap();
    println!("stationarity residual {:.3e}", report.residual);

    let q = stationary_closed_form(&coeffs, grid, 0.0).unwrap();
    let problem = LinearProblem::new(grid, coeffs, BoundaryCondition::Reflecting);
    let end = solve_ivp(&problem, &DensityField::uniform(grid), 10.0, 2560, &[]).unwrap().final_state;
    println!("max |p(10) - q| = {:.3e}", end.max_abs_diff(&q));
}
