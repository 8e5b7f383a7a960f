//! Periodic logistic equation solved by monotone iteration from both sides.

use periodic_fpe::expr::CoefficientField;
use periodic_fpe::fpe::{BoundaryCondition, FpCoefficients, Grid1D};
use periodic_fpe::semilinear::{default_pair, monotone_iterate, MonotoneOptions, SemilinearProblem};

fn main() {
    let grid = Grid1D::new(60, 0.0, 1.0).unwrap();
    let coeffs = FpCoefficients::parse("1", "0", Some(1.0)).unwrap();
    let f = CoefficientField::parse("u*(20 + 5*sin(2*pi*t) - u)", Some(1.0)).unwrap();
    let problem = SemilinearProblem::new(grid, coeffs, f, BoundaryCondition::Absorbing, 1.0, 128).unwrap();
    let (pair, m0) = default_pair(&problem, 1e-3).unwrap();
    println!("f(t, x, u) <= 0 for u >= {m0:.4}; upper start {:.4}", 2.0 * m0);
    let opts = MonotoneOptions { tol: 1e-9, ..MonotoneOptions::default() };
    let res = monotone_iterate(&problem, &pair, opts).unwrap();
    println!("c = {:.3}, {} sweeps, gap {:.3e}", res.c, res.trace.len(), res.gap);
    let max_u = res.from_upper.levels.iter().flatten().copied().fold(0.0, f64::max);
    println!("max u over a period {max_u:.4}, periodicity residual {:.3e}", res.from_upper.residual);
    for w in res.warnings {
        println!("warning: {w}");
    }
}
