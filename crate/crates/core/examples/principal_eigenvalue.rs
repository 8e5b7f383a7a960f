//! Principal eigenvalue of a periodic-parabolic operator and its shift law.

use periodic_fpe::fpe::{BoundaryCondition, Convention, FpCoefficients, Grid1D, LinearProblem};
use periodic_fpe::period_map::lambda1;

fn main() {
    let grid = Grid1D::new(100, 0.0, 1.0).unwrap();
    let coeffs = FpCoefficients::parse("1 + 0.5*cos(2*pi*t)", "x*sin(2*pi*t)", Some(1.0)).unwrap();
    let base = LinearProblem::new(grid, coeffs, BoundaryCondition::Absorbing).with_convention(Convention::NonDivergence);
    let l0 = lambda1(&base, 1.0, 256, 1e-12).unwrap().lambda1;
    println!("lambda1 = {l0:.6} (pi^2 = {:.6})", std::f64::consts::PI.powi(2));
    for c in [0.5, 2.0, 5.0] {
        let l = lambda1(&base.clone().with_shift(c), 1.0, 256, 1e-12).unwrap().lambda1;
        println!("shift {c}: lambda1 {:.6}, difference {:.3e}", l, l - l0 - c);
    }
}
