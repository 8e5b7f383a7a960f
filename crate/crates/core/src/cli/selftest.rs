//! Small closed-form checks of every module, run by `selftest`.

use super::CliError;
use crate::bl_metric::{dbl, EmpiricalMeasure};
use crate::expr::CoefficientField;
use crate::fpe::{solve_ivp, BoundaryCondition, DensityField, FpCoefficients, Grid1D, LinearProblem};
use crate::markov::{detect_period, detect_strong_period, DistributionVector, TransitionMatrix};
use crate::period_map::build_period_map;
use crate::sde::{sample_laws, InitialLaw, SdeSystem};

type Check = (&'static str, fn() -> Result<bool, CliError>);

fn expr_eval() -> Result<bool, CliError> {
    let f = CoefficientField::parse("1 + sin(2*pi*t)", Some(1.0)).map_err(|e| CliError::Domain {
        kind: "expr",
        message: e.to_string(),
    })?;
    Ok((f.eval(0.25, 0.0)? - 2.0).abs() < 1e-15 && (f.eval(1.25, 0.0)? - 2.0).abs() < 1e-12)
}

fn markov_identity() -> Result<bool, CliError> {
    let p = TransitionMatrix::identity(3);
    let x = DistributionVector::new(vec![0.2, 0.3, 0.5])?;
    Ok(detect_period(&p, &x, 8, 1e-12)?.period == Some(1))
}

fn markov_cycle() -> Result<bool, CliError> {
    // cycles of length 2 and 3
    let p = TransitionMatrix::permutation(&[1, 0, 3, 4, 2])?;
    Ok(detect_strong_period(&p, 64, 1e-12)? == Some(6))
}

fn dbl_diracs() -> Result<bool, CliError> {
    let a = EmpiricalMeasure::dirac(&[0.0]);
    let same = dbl(&a, &a)?.distance;
    let near = dbl(&a, &EmpiricalMeasure::dirac(&[0.5]))?.distance;
    let far = dbl(&a, &EmpiricalMeasure::dirac(&[5.0]))?.distance;
    Ok(same == 0.0 && (near - 0.5).abs() < 1e-12 && (far - 2.0).abs() < 1e-12)
}

fn sde_frozen() -> Result<bool, CliError> {
    let sys = SdeSystem::scalar("0", "0", 1.0, 0.0, 1.0)?;
    let batch = sample_laws(&sys, &InitialLaw::Point(vec![0.3]), 4, 2, 0.25, 7)?;
    Ok(batch.snapshots.iter().all(|m| m.points().all(|p| p[0] == 0.3)))
}

fn fpe_uniform_stays() -> Result<bool, CliError> {
    let grid = Grid1D::new(20, 0.0, 1.0)?;
    let coeffs = FpCoefficients::parse("0.5", "0", Some(1.0)).map_err(|e| CliError::Domain {
        kind: "expr",
        message: e.to_string(),
    })?;
    let problem = LinearProblem::new(grid, coeffs, BoundaryCondition::Reflecting);
    let traj = solve_ivp(&problem, &DensityField::uniform(grid), 1.0, 32, &[])?;
    Ok(traj.final_state.max_abs_diff(&DensityField::uniform(grid)) < 1e-12)
}

fn period_map_identity() -> Result<bool, CliError> {
    let grid = Grid1D::new(8, 0.0, 1.0)?;
    let coeffs = FpCoefficients::new(CoefficientField::constant(0.0), CoefficientField::constant(0.0));
    let problem = LinearProblem::new(grid, coeffs, BoundaryCondition::Reflecting).with_ellipticity_floor(0.0);
    let map = build_period_map(&problem, 1.0, 4)?;
    let n = map.dim();
    Ok((0..n).all(|i| (0..n).all(|j| map.k[(i, j)] == if i == j { 1.0 } else { 0.0 })))
}

const CHECKS: &[Check] = &[
    ("expr: periodic evaluation", expr_eval),
    ("markov: identity has period 1", markov_identity),
    ("markov: permutation order is lcm of cycles", markov_cycle),
    ("dbl: dirac distances", dbl_diracs),
    ("sde: zero coefficients freeze paths", sde_frozen),
    ("fpe: uniform density is stationary under reflection", fpe_uniform_stays),
    ("period_map: zero coefficients give the identity", period_map_identity),
];

pub fn run() -> Result<(), CliError> {
    let mut failed = Vec::new();
    for (name, check) in CHECKS {
        let ok = match check() {
            Ok(ok) => ok,
            Err(e) => {
                println!("FAIL {name}: {e}");
                failed.push(*name);
                continue;
            }
        };
        println!("{} {name}", if ok { "ok  " } else { "FAIL" });
        if !ok {
            failed.push(*name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Domain {
            kind: "selftest",
            message: format!("failed: {}", failed.join("; ")),
        })
    }
}
