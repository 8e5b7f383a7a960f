//! Period map of an absorbing problem: spectral radius and decay rate.

use periodic_fpe::fpe::{BoundaryCondition, FpCoefficients, Grid1D, LinearProblem};
use periodic_fpe::period_map::{build_period_map, decay_check, power_iteration};

fn main() {
    let grid = Grid1D::new(80, 0.0, 1.0).unwrap();
    let coeffs = FpCoefficients::parse("0.5 + 0.25*sin(2*pi*t)", "0", Some(1.0)).unwrap();
    let problem = LinearProblem::new(grid, coeffs, BoundaryCondition::Absorbing);
    let map = build_period_map(&problem, 1.0, 256).unwrap();
    let spec = power_iteration(&map, 1e-12, 100_000).unwrap();
    // the time average of a is 1/2, so r should be close to exp(-pi^2 / 2)
    let guess = (-std::f64::consts::PI.powi(2) * 0.5).exp();
    println!("r = {:.6e} (averaged guess {:.6e}), mu = {:.6}", spec.r, guess, spec.mu);
    println!("dense check: {:?}", map.dense_spectral_radius());
    let decay = decay_check(&map, &spec, 5);
    println!("||K^n|| against r^n over {} periods: worst rel. error {:.3e}", decay.periods_checked, decay.max_relative_error);
}
