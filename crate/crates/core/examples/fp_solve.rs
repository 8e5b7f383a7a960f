//! Fokker-Planck evolution with reflecting walls: mass and positivity.

use periodic_fpe::fpe::{solve_ivp, BoundaryCondition, DensityField, FpCoefficients, Grid1D, Integrator, LinearProblem};

fn main() {
    let grid = Grid1D::new(200, -1.0, 1.0).unwrap();
    let coeffs = FpCoefficients::parse("0.1 + 0.05*cos(2*pi*t)", "-2*x + sin(2*pi*t)", Some(1.0)).unwrap();
    let p0 = DensityField::from_fn(grid, 0.0, |x| if (x - 0.5).abs() < 0.1 { 1.0 } else { 0.0 }).normalized();
    for integrator in [Integrator::CrankNicolson, Integrator::ImplicitEuler] {
        let problem = LinearProblem::new(grid, coeffs.clone(), BoundaryCondition::Reflecting).with_integrator(integrator);
        let traj = solve_ivp(&problem, &p0, 2.0, 512, &[0.25, 0.5, 1.0, 2.0]).unwrap();
        println!("{integrator:?}: mass drift {:.2e}, min value {:.2e}", traj.max_mass_drift, traj.min_value);
        for s in &traj.snapshots {
            let peak = s.values.iter().copied().fold(0.0, f64::max);
            println!("  t = {:.2}  mass {:.12}  peak {:.4}", s.time, s.mass, peak);
        }
    }
}
