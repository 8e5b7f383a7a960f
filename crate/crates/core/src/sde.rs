//! Reflected SDE `dX = b(t, X) dt + sigma(t, X) dB + dPhi` on a box,
//! simulated by Euler-Maruyama followed by Euclidean projection.
//!
//! Coefficient expressions see the scalar variable `x`; in a box of
//! dimension `d`, drift component `i` and diffusion row `i` are evaluated at
//! `x = X_i`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bl_metric::{cesaro_defect, dbl, BlError, CesaroDefect, EmpiricalMeasure};
use crate::expr::{CoefficientField, EvalError};

/// Snapping resolution used by the periodicity diagnostic: about this many
/// grid cells span the box diameter in 1D, and the total cell count stays
/// near it in higher dimensions.
pub const SNAP_DIVISIONS: f64 = 512.0;

/// Grid spacing of the diagnostic for a box.
pub fn snap_spacing(domain: &BoxDomain) -> f64 {
    domain.diameter() / SNAP_DIVISIONS.powf(1.0 / domain.dim() as f64)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdeError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Bl(#[from] BlError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, SdeError> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(SdeError::InvalidDomain(format!(
                "bounds of length {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u))
        {
            return Err(SdeError::InvalidDomain(format!(
                "need lower < upper, got {lower:?} and {upper:?}"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn interval(lower: f64, upper: f64) -> Result<Self, SdeError> {
        Self::new(vec![lower], vec![upper])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// Clamps `x` into the box; returns whether any component moved.
    pub fn project(&self, x: &mut [f64]) -> bool {
        let mut moved = false;
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            let c = v.clamp(*l, *u);
            if c != *v {
                moved = true;
                *v = c;
            }
        }
        moved
    }
}

#[derive(Debug, Clone)]
pub struct SdeSystem {
    pub drift: Vec<CoefficientField>,
    /// `d` rows of `m` entries.
    pub sigma: Vec<Vec<CoefficientField>>,
    pub period: f64,
    pub domain: BoxDomain,
}

impl SdeSystem {
    pub fn new(
        drift: Vec<CoefficientField>,
        sigma: Vec<Vec<CoefficientField>>,
        period: f64,
        domain: BoxDomain,
    ) -> Result<Self, SdeError> {
        let d = domain.dim();
        if drift.len() != d || sigma.len() != d {
            return Err(SdeError::InvalidArgument(format!(
                "domain of dimension {d} with {} drift and {} diffusion rows",
                drift.len(),
                sigma.len()
            )));
        }
        let m = sigma[0].len();
        if m == 0 || sigma.iter().any(|row| row.len() != m) {
            return Err(SdeError::InvalidArgument("ragged or empty diffusion matrix".into()));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(SdeError::InvalidArgument(format!("bad period {period}")));
        }
        // every field shares the system period
        let drift = drift.into_iter().map(|f| f.with_period(period)).collect();
        let sigma = sigma
            .into_iter()
            .map(|row| row.into_iter().map(|f| f.with_period(period)).collect())
            .collect();
        Ok(Self {
            drift,
            sigma,
            period,
            domain,
        })
    }

    /// Scalar system on an interval.
    pub fn scalar(drift: &str, sigma: &str, period: f64, lower: f64, upper: f64) -> Result<Self, SdeError> {
        let parse = |s: &str| {
            CoefficientField::parse(s, Some(period))
                .map_err(|e| SdeError::InvalidArgument(e.to_string()))
        };
        Self::new(
            vec![parse(drift)?],
            vec![vec![parse(sigma)?]],
            period,
            BoxDomain::interval(lower, upper)?,
        )
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn brownian_dim(&self) -> usize {
        self.sigma[0].len()
    }
}

/// One Euler-Maruyama step followed by projection onto the box. Returns
/// whether the projection moved the point.
pub fn em_reflect_step(
    x: &mut [f64],
    t: f64,
    dt: f64,
    dw: &[f64],
    sys: &SdeSystem,
) -> Result<bool, SdeError> {
    let d = sys.dim();
    let mut next = [0.0f64; 8];
    let mut heap;
    let out: &mut [f64] = if d <= next.len() {
        &mut next[..d]
    } else {
        heap = vec![0.0; d];
        &mut heap
    };
    for i in 0..d {
        let xi = x[i];
        let mut v = xi + sys.drift[i].eval(t, xi)? * dt;
        for (s, w) in sys.sigma[i].iter().zip(dw) {
            v += s.eval(t, xi)? * w;
        }
        if !v.is_finite() {
            return Err(SdeError::NonFiniteState { t });
        }
        out[i] = v;
    }
    x.copy_from_slice(out);
    Ok(sys.domain.project(x))
}

#[derive(Debug, Clone)]
pub enum InitialLaw {
    Point(Vec<f64>),
    /// Each path draws its start from this measure.
    Measure(EmpiricalMeasure),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub seed: u64,
    pub paths: usize,
    pub dt: f64,
    pub period: f64,
    /// Empirical laws at `0, T, ..., nT`.
    pub snapshots: Vec<EmpiricalMeasure>,
    pub reflection_counts: Vec<u64>,
}

fn steps_per_period(period: f64, dt: f64) -> Result<usize, SdeError> {
    if !(dt > 0.0) {
        return Err(SdeError::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let k = (period / dt).round();
    if k < 1.0 || ((k * dt - period) / period).abs() > 1e-12 {
        return Err(SdeError::InvalidArgument(format!(
            "dt = {dt} does not divide the period {period}"
        )));
    }
    Ok(k as usize)
}

fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

fn draw_start(init: &InitialLaw, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match init {
        InitialLaw::Point(p) => p.clone(),
        InitialLaw::Measure(mu) => {
            let u: f64 = Uniform::new(0.0, mu.mass()).expect("positive mass").sample(rng);
            let mut acc = 0.0;
            for (i, w) in mu.weights().iter().enumerate() {
                acc += w;
                if u < acc {
                    return mu.point(i).to_vec();
                }
            }
            mu.point(mu.len() - 1).to_vec()
        }
    }
}

/// Simulates `paths` independent paths for `n_periods` periods and records
/// the empirical law at every multiple of the period. Path `k` uses its own
/// ChaCha8 stream `k` under `seed`, so results do not depend on scheduling.
pub fn sample_laws(
    sys: &SdeSystem,
    init: &InitialLaw,
    paths: usize,
    n_periods: usize,
    dt: f64,
    seed: u64,
) -> Result<TrajectoryBatch, SdeError> {
    if paths == 0 {
        return Err(SdeError::InvalidArgument("need at least one path".into()));
    }
    let d = sys.dim();
    match init {
        InitialLaw::Point(p) => {
            if p.len() != d || !sys.domain.contains(p) {
                return Err(SdeError::InvalidArgument(format!(
                    "initial point {p:?} is not in the domain"
                )));
            }
        }
        InitialLaw::Measure(mu) => {
            if mu.dim() != d || mu.is_empty() || !(mu.mass() > 0.0) {
                return Err(SdeError::InvalidArgument("bad initial measure".into()));
            }
            if mu.points().any(|p| !sys.domain.contains(p)) {
                return Err(SdeError::InvalidArgument(
                    "initial measure has atoms outside the domain".into(),
                ));
            }
        }
    }
    let k = steps_per_period(sys.period, dt)?;
    let m = sys.brownian_dim();
    let sqdt = dt.sqrt();

    let results: Vec<(Vec<f64>, u64)> = (0..paths)
        .into_par_iter()
        .map(|path| -> Result<(Vec<f64>, u64), SdeError> {
            let mut rng = path_rng(seed, path);
            let mut x = draw_start(init, &mut rng);
            let mut record = Vec::with_capacity((n_periods + 1) * d);
            record.extend_from_slice(&x);
            let mut dw = vec![0.0; m];
            let mut count = 0u64;
            for n in 0..n_periods {
                for s in 0..k {
                    let t = sys.period * n as f64 + dt * s as f64;
                    for w in dw.iter_mut() {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *w = z * sqdt;
                    }
                    if em_reflect_step(&mut x, t, dt, &dw, sys)? {
                        count += 1;
                    }
                }
                record.extend_from_slice(&x);
            }
            Ok((record, count))
        })
        .collect::<Result<_, _>>()?;

    let w = 1.0 / paths as f64;
    let mut snapshots = Vec::with_capacity(n_periods + 1);
    for n in 0..=n_periods {
        let mut coords = Vec::with_capacity(paths * d);
        for (rec, _) in &results {
            coords.extend_from_slice(&rec[n * d..(n + 1) * d]);
        }
        snapshots.push(EmpiricalMeasure::from_flat(d, coords, vec![w; paths])?);
    }
    Ok(TrajectoryBatch {
        seed,
        paths,
        dt,
        period: sys.period,
        snapshots,
        reflection_counts: results.into_iter().map(|r| r.1).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub drift_lipschitz: f64,
    pub diffusion_lipschitz: f64,
    pub drift_growth: f64,
    pub diffusion_growth: f64,
    pub samples: usize,
}

impl LipschitzReport {
    pub fn constant(&self) -> f64 {
        self.drift_lipschitz
            .max(self.diffusion_lipschitz)
            .max(self.drift_growth)
            .max(self.diffusion_growth)
    }
}

fn coefficient_values(sys: &SdeSystem, t: f64, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>), SdeError> {
    let b = sys
        .drift
        .iter()
        .zip(x)
        .map(|(f, xi)| f.eval(t, *xi))
        .collect::<Result<Vec<_>, _>>()?;
    let mut s = Vec::new();
    for (row, xi) in sys.sigma.iter().zip(x) {
        for f in row {
            s.push(f.eval(t, *xi)?);
        }
    }
    Ok((b, s))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Sampled Lipschitz and linear-growth quotients of the coefficients over
/// the box and one period. Diagnostic only.
pub fn lipschitz_report(sys: &SdeSystem, samples: usize, seed: u64) -> Result<LipschitzReport, SdeError> {
    if samples < 2 {
        return Err(SdeError::InvalidArgument("need at least two samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ts = Uniform::new(0.0, sys.period).expect("positive period");
    let dom = &sys.domain;
    let axes: Vec<Uniform<f64>> = dom
        .lower()
        .iter()
        .zip(dom.upper())
        .map(|(l, u)| Uniform::new_inclusive(*l, *u).expect("valid box"))
        .collect();
    let point = |rng: &mut ChaCha8Rng| -> Vec<f64> { axes.iter().map(|a| a.sample(rng)).collect() };
    let mut rep = LipschitzReport {
        drift_lipschitz: 0.0,
        diffusion_lipschitz: 0.0,
        drift_growth: 0.0,
        diffusion_growth: 0.0,
        samples,
    };
    for _ in 0..samples {
        let t = ts.sample(&mut rng);
        let x = point(&mut rng);
        // pair partner: half far away, half close by
        let mut y = point(&mut rng);
        if rng_bit(&mut rng) {
            let scale = 1e-3 * dom.diameter();
            for (yi, xi) in y.iter_mut().zip(&x) {
                *yi = *xi + (*yi - *xi) * scale;
            }
            dom.project(&mut y);
        }
        let (bx, sx) = coefficient_values(sys, t, &x)?;
        let (by, sy) = coefficient_values(sys, t, &y)?;
        let g = (1.0 + norm(&x).powi(2)).sqrt();
        rep.drift_growth = rep.drift_growth.max(norm(&bx) / g);
        rep.diffusion_growth = rep.diffusion_growth.max(norm(&sx) / g);
        let dxy = dist(&x, &y);
        if dxy > 0.0 {
            rep.drift_lipschitz = rep.drift_lipschitz.max(dist(&bx, &by) / dxy);
            rep.diffusion_lipschitz = rep.diffusion_lipschitz.max(dist(&sx, &sy) / dxy);
        }
    }
    Ok(rep)
}

fn rng_bit(rng: &mut ChaCha8Rng) -> bool {
    use rand::Rng;
    rng.random::<bool>()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicityReport {
    pub cesaro: CesaroDefect,
    /// Largest `d_BL` between any two of the last five snapshots.
    pub late_pairwise_max: f64,
    pub second_moments: Vec<f64>,
    pub snap: f64,
}

/// Cesaro defect of the post-burn-in snapshots plus late-time spread.
/// Snapshots are snapped to the grid of [`snap_spacing`] first.
pub fn periodicity_diagnostic(batch: &TrajectoryBatch, domain: &BoxDomain, burn_in: usize) -> Result<PeriodicityReport, SdeError> {
    if batch.snapshots.len() <= burn_in + 1 {
        return Err(SdeError::InvalidArgument(format!(
            "{} snapshots do not leave two after a burn-in of {burn_in}",
            batch.snapshots.len()
        )));
    }
    let eps = snap_spacing(domain);
    let laws: Vec<EmpiricalMeasure> = batch.snapshots[burn_in..]
        .par_iter()
        .map(|m| m.snapped(eps, domain.lower()))
        .collect();
    let cesaro = cesaro_defect(&laws, None)?;
    let tail = &laws[laws.len().saturating_sub(5)..];
    let mut late = 0.0f64;
    for i in 0..tail.len() {
        for j in i + 1..tail.len() {
            late = late.max(dbl(&tail[i], &tail[j])?.distance);
        }
    }
    Ok(PeriodicityReport {
        cesaro,
        late_pairwise_max: late,
        second_moments: batch.snapshots.iter().map(|m| m.second_moment()).collect(),
        snap: eps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_examples() {
        let frozen = SdeSystem::scalar("0", "0", 1.0, 0.0, 1.0).unwrap();
        let mut x = [0.3];
        assert!(!em_reflect_step(&mut x, 0.0, 0.1, &[0.7], &frozen).unwrap());
        assert_eq!(x, [0.3]);

        let bm = SdeSystem::scalar("0", "1", 1.0, 0.0, 1.0).unwrap();
        let mut x = [0.9];
        assert!(em_reflect_step(&mut x, 0.0, 0.01, &[0.5], &bm).unwrap());
        assert_eq!(x, [1.0]);

        let ou = SdeSystem::scalar("-x", "0", 1.0, -1.0, 1.0).unwrap();
        let mut x = [0.5];
        em_reflect_step(&mut x, 0.0, 0.1, &[0.0], &ou).unwrap();
        assert!((x[0] - 0.45).abs() < 1e-15);
    }

    #[test]
    fn frozen_snapshots_stay_put() {
        let sys = SdeSystem::scalar("0", "0", 1.0, 0.0, 1.0).unwrap();
        let b = sample_laws(&sys, &InitialLaw::Point(vec![0.25]), 16, 3, 0.25, 1).unwrap();
        assert_eq!(b.snapshots.len(), 4);
        for s in &b.snapshots {
            assert!(s.points().all(|p| p == [0.25]));
        }
        let rep = periodicity_diagnostic(&b, &sys.domain, 0).unwrap();
        assert_eq!(rep.cesaro.restricted, 0.0);
    }

    #[test]
    fn reproducible_and_contained() {
        let sys = SdeSystem::scalar("sin(2*pi*t) - x", "0.5", 1.0, -2.0, 2.0).unwrap();
        let a = sample_laws(&sys, &InitialLaw::Point(vec![0.0]), 64, 2, 1.0 / 64.0, 9).unwrap();
        let b = sample_laws(&sys, &InitialLaw::Point(vec![0.0]), 64, 2, 1.0 / 64.0, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.snapshots.iter().all(|s| s.points().all(|p| sys.domain.contains(p))));
        let c = sample_laws(&sys, &InitialLaw::Point(vec![0.0]), 64, 2, 1.0 / 64.0, 10).unwrap();
        assert_ne!(a.snapshots, c.snapshots);
    }

    #[test]
    fn dt_must_divide_period() {
        let sys = SdeSystem::scalar("0", "1", 1.0, 0.0, 1.0).unwrap();
        assert!(sample_laws(&sys, &InitialLaw::Point(vec![0.5]), 1, 1, 0.3, 0).is_err());
    }

    #[test]
    fn lipschitz_examples() {
        let ou = SdeSystem::scalar("-x", "0.3", 1.0, -2.0, 2.0).unwrap();
        let r = lipschitz_report(&ou, 500, 3).unwrap();
        assert!((r.drift_lipschitz - 1.0).abs() < 1e-9);
        assert!(r.diffusion_lipschitz < 1e-9);

        let s = SdeSystem::scalar("sin(x)", "x", 1.0, 0.0, 1.0).unwrap();
        let r = lipschitz_report(&s, 2000, 4).unwrap();
        assert!(r.drift_lipschitz <= 1.0 + 1e-6 && r.drift_lipschitz > 0.9);
        assert!(r.diffusion_lipschitz <= 1.0 + 1e-6);
        assert!(r.diffusion_growth <= 1.0 + 1e-6);
    }
}
