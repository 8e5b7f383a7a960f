//! Closed-form stationary density of the reflecting 1D problem and the
//! solvability condition that makes it time-independent.

use serde::Serialize;

use super::{DensityField, FpCoefficients, FpeError, Grid1D, DEFAULT_ELLIPTICITY_FLOOR};

const MAX_EXPONENT: f64 = 700.0;

fn checked_a(coeffs: &FpCoefficients, t: f64, x: f64) -> Result<f64, FpeError> {
    let a = coeffs.a(t, x)?;
    if !(a >= DEFAULT_ELLIPTICITY_FLOOR) || !a.is_finite() {
        return Err(FpeError::EllipticityViolation { t, x, value: a });
    }
    Ok(a)
}

/// `(b - a_x) / a` with `a_x` from face values `h` to either side.
fn log_density_slope(
    coeffs: &FpCoefficients,
    grid: &Grid1D,
    t: f64,
    x: f64,
) -> Result<f64, FpeError> {
    let h = 0.5 * grid.dx();
    let a = checked_a(coeffs, t, x)?;
    let b = coeffs.b(t, x)?;
    let (lo, hi) = ((x - h).max(grid.x_left()), (x + h).min(grid.x_right()));
    let ax = (coeffs.a(t, hi)? - coeffs.a(t, lo)?) / (hi - lo);
    Ok((b - ax) / a)
}

/// `q(x) = exp( int_{x_left}^{x} (b - a_x) / a )` on the cell centres,
/// normalised to unit discrete mass.
pub fn stationary_closed_form(
    coeffs: &FpCoefficients,
    grid: Grid1D,
    t: f64,
) -> Result<DensityField, FpeError> {
    let centers = grid.centers();
    let mut prev_x = grid.x_left();
    let mut prev_f = log_density_slope(coeffs, &grid, t, prev_x)?;
    let mut exponent = 0.0;
    let mut exps = Vec::with_capacity(centers.len());
    for &x in &centers {
        let f = log_density_slope(coeffs, &grid, t, x)?;
        exponent += 0.5 * (f + prev_f) * (x - prev_x);
        if exponent.abs() > MAX_EXPONENT || !exponent.is_finite() {
            return Err(FpeError::QuadratureOverflow { x, exponent });
        }
        exps.push(exponent);
        prev_x = x;
        prev_f = f;
    }
    // shift by the maximum before exponentiating; normalisation absorbs it
    let top = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let values: Vec<f64> = exps.iter().map(|e| (e - top).exp()).collect();
    Ok(DensityField {
        grid,
        values,
        time: t,
    }
    .normalized())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarityReport {
    /// `max_t max_x |int_{x_left}^{x} I(t, y) dy|`.
    pub residual: f64,
    pub worst_time: f64,
    pub per_time: Vec<(f64, f64)>,
}

/// Evaluates `I = (a (b_t - a_xt) - a_t (b - a_x)) / a^2` by finite
/// differences and reports the largest cumulative integral in `x`.
pub fn check_stationarity_condition(
    coeffs: &FpCoefficients,
    grid: Grid1D,
    times: &[f64],
) -> Result<StationarityReport, FpeError> {
    let hx = 0.5 * grid.dx();
    let ht = 1e-4 * coeffs.diffusion.period().or(coeffs.drift.period()).unwrap_or(1.0);
    let a = |t: f64, x: f64| coeffs.a(t, x);
    let b = |t: f64, x: f64| coeffs.b(t, x);
    let ax = |t: f64, x: f64| -> Result<f64, FpeError> {
        let (lo, hi) = ((x - hx).max(grid.x_left()), (x + hx).min(grid.x_right()));
        Ok((a(t, hi)? - a(t, lo)?) / (hi - lo))
    };
    let integrand = |t: f64, x: f64| -> Result<f64, FpeError> {
        let av = a(t, x)?;
        let at = (a(t + ht, x)? - a(t - ht, x)?) / (2.0 * ht);
        let bt = (b(t + ht, x)? - b(t - ht, x)?) / (2.0 * ht);
        let axt = (ax(t + ht, x)? - ax(t - ht, x)?) / (2.0 * ht);
        Ok((av * (bt - axt) - at * (b(t, x)? - ax(t, x)?)) / (av * av))
    };

    let mut nodes = vec![grid.x_left()];
    nodes.extend(grid.centers());
    nodes.push(grid.x_right());

    let mut per_time = Vec::with_capacity(times.len());
    let mut residual = 0.0f64;
    let mut worst_time = times.first().copied().unwrap_or(0.0);
    for &t in times {
        let mut acc = 0.0;
        let mut worst = 0.0f64;
        let mut prev = integrand(t, nodes[0])?;
        for w in nodes.windows(2) {
            let cur = integrand(t, w[1])?;
            acc += 0.5 * (prev + cur) * (w[1] - w[0]);
            worst = worst.max(acc.abs());
            prev = cur;
        }
        per_time.push((t, worst));
        if worst > residual {
            residual = worst;
            worst_time = t;
        }
    }
    Ok(StationarityReport {
        residual,
        worst_time,
        per_time,
    })
}
