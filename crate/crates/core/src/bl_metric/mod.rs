//! Bounded-Lipschitz distance between finitely supported measures.
//!
//! `d_BL(mu, nu) = sup { |int h d(mu - nu)| : |h| <= 1, Lip(h) <= 1 }`.
//! On a finite merged support this is a linear program in the values
//! `h_i`, solved exactly: by the chain recursion in one dimension and as a
//! transport problem otherwise. A dense simplex on the primal program is
//! kept for cross-checks on small supports.

mod chain;
mod flow;
mod simplex;

pub use chain::solve_chain;
pub use flow::solve_flow;
pub use simplex::{DenseLp, LpOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_SIMPLEX_ITER: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BlError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("LP did not converge within {0} iterations")]
    SolverFailure(usize),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
}

/// Weighted point cloud in `R^d`. Weights are nonnegative; the total mass
/// may be below one (restricted laws are sub-probability measures).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(dim: usize, points: &[Vec<f64>], weights: Vec<f64>) -> Result<Self, BlError> {
        if points.len() != weights.len() {
            return Err(BlError::InvalidMeasure(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(BlError::DimensionMismatch(dim, p.len()));
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(dim, coords, weights)
    }

    pub fn from_flat(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self, BlError> {
        if dim == 0 {
            return Err(BlError::InvalidMeasure("dimension must be positive".into()));
        }
        if coords.len() != dim * weights.len() {
            return Err(BlError::InvalidMeasure(format!(
                "{} coordinates do not form {} points of dimension {dim}",
                coords.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(BlError::InvalidMeasure(format!("bad weight {w}")));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(BlError::InvalidMeasure("non-finite coordinate".into()));
        }
        Ok(Self {
            dim,
            coords,
            weights,
        })
    }

    pub fn dirac(point: &[f64]) -> Self {
        Self {
            dim: point.len(),
            coords: point.to_vec(),
            weights: vec![1.0],
        }
    }

    /// Equal weights `1/n` on each sample.
    pub fn uniform_samples(dim: usize, coords: Vec<f64>) -> Result<Self, BlError> {
        let n = coords.len() / dim.max(1);
        Self::from_flat(dim, coords, vec![1.0 / n as f64; n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            coords: self.coords.clone(),
            weights: self.weights.iter().map(|w| w * c).collect(),
        }
    }

    /// Mean of `|z|^2` per unit mass.
    pub fn second_moment(&self) -> f64 {
        let mass = self.mass();
        if mass == 0.0 {
            return 0.0;
        }
        self.points()
            .zip(&self.weights)
            .map(|(p, w)| w * p.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            / mass
    }

    /// Snaps every coordinate to `origin + eps * round((z - origin) / eps)`
    /// and merges coincident atoms. Moves each atom by at most
    /// `eps * sqrt(d) / 2`.
    pub fn snapped(&self, eps: f64, origin: &[f64]) -> Self {
        assert!(eps > 0.0 && origin.len() == self.dim);
        let snapped: Vec<Vec<f64>> = self
            .points()
            .map(|p| {
                p.iter()
                    .zip(origin)
                    .map(|(z, o)| o + eps * ((z - o) / eps).round())
                    .collect()
            })
            .collect();
        merge_atoms(self.dim, snapped.into_iter().zip(self.weights.iter().copied()))
    }

    /// Same atoms merged, sorted lexicographically.
    pub fn canonical(&self) -> Self {
        merge_atoms(
            self.dim,
            self.points()
                .map(<[f64]>::to_vec)
                .zip(self.weights.iter().copied()),
        )
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

fn merge_atoms(dim: usize, atoms: impl Iterator<Item = (Vec<f64>, f64)>) -> EmpiricalMeasure {
    let mut atoms: Vec<(Vec<f64>, f64)> = atoms.collect();
    atoms.sort_by(|a, b| lex_cmp(&a.0, &b.0));
    let mut coords = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut last: Option<Vec<f64>> = None;
    for (p, w) in atoms {
        if last.as_deref() == Some(p.as_slice()) {
            *weights.last_mut().unwrap() += w;
        } else {
            coords.extend_from_slice(&p);
            weights.push(w);
            last = Some(p);
        }
    }
    EmpiricalMeasure {
        dim,
        coords,
        weights,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    /// Chain recursion in 1D, transport otherwise.
    #[default]
    Auto,
    /// Successive shortest paths on the transport dual.
    Flow,
    /// Dense simplex on the test-function program; quadratic in the
    /// support size, for small problems only.
    Simplex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlResult {
    pub distance: f64,
    /// Merged support, one point per row.
    pub support: Vec<Vec<f64>>,
    /// Optimal test-function values on `support`.
    pub witness: Vec<f64>,
    pub status: SolveStatus,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn dbl(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<BlResult, BlError> {
    dbl_with(mu, nu, Method::Auto)
}

pub fn dbl_with(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    method: Method,
) -> Result<BlResult, BlError> {
    if mu.dim != nu.dim {
        return Err(BlError::DimensionMismatch(mu.dim, nu.dim));
    }
    let dim = mu.dim;
    let signed = mu
        .points()
        .map(<[f64]>::to_vec)
        .zip(mu.weights.iter().copied())
        .chain(
            nu.points()
                .map(<[f64]>::to_vec)
                .zip(nu.weights.iter().map(|w| -w)),
        );
    // merge_atoms sums signed weights per location
    let merged = merge_atoms(dim, signed);
    let support: Vec<Vec<f64>> = merged.points().map(<[f64]>::to_vec).collect();
    let c = merged.weights.clone();

    // atoms with zero net charge do not move the optimum; they get a
    // Lipschitz extension of the witness afterwards
    let active: Vec<usize> = (0..c.len()).filter(|&i| c[i] != 0.0).collect();
    let mut witness = vec![0.0; c.len()];

    if !active.is_empty() {
        let ca: Vec<f64> = active.iter().map(|&i| c[i]).collect();
        let pts: Vec<&[f64]> = active.iter().map(|&i| support[i].as_slice()).collect();
        let values = if dim == 1 && method == Method::Auto {
            // support is sorted, so active atoms are sorted as well
            let gaps: Vec<f64> = active
                .windows(2)
                .map(|w| support[w[1]][0] - support[w[0]][0])
                .collect();
            solve_chain(&ca, &gaps).1
        } else if method == Method::Simplex {
            solve_simplex(&ca, &pts)?
        } else {
            solve_flow(&ca, &pts).1
        };
        for (&i, v) in active.iter().zip(values) {
            witness[i] = v;
        }
        for i in 0..c.len() {
            if c[i] == 0.0 {
                let ext = active
                    .iter()
                    .map(|&j| witness[j] + euclid(&support[i], &support[j]))
                    .fold(f64::INFINITY, f64::min);
                witness[i] = ext.clamp(-1.0, 1.0);
            }
        }
    }
    let distance = c.iter().zip(&witness).map(|(a, b)| a * b).sum::<f64>().max(0.0);
    Ok(BlResult {
        distance,
        support,
        witness,
        status: SolveStatus::Optimal,
    })
}

/// Shifted variables `g = h + 1` in `[0, 2]` make the origin feasible.
fn solve_simplex(c: &[f64], pts: &[&[f64]]) -> Result<Vec<f64>, BlError> {
    let k = c.len();
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..k {
        let mut row = vec![0.0; k];
        row[i] = 1.0;
        rows.push(row);
        rhs.push(2.0);
    }
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let d = euclid(pts[i], pts[j]);
            // |h_i - h_j| <= 2 already holds
            if d >= 2.0 {
                continue;
            }
            let mut row = vec![0.0; k];
            row[i] = 1.0;
            row[j] = -1.0;
            rows.push(row);
            rhs.push(d);
        }
    }
    let lp = DenseLp {
        objective: c.to_vec(),
        rows,
        rhs,
    };
    match lp.solve(DEFAULT_SIMPLEX_ITER) {
        LpOutcome::Optimal { y, .. } => Ok(y.into_iter().map(|g| (g - 1.0).clamp(-1.0, 1.0)).collect()),
        LpOutcome::IterationLimit { iterations } => Err(BlError::SolverFailure(iterations)),
        LpOutcome::Unbounded => unreachable!("feasible set is bounded"),
    }
}

/// Periodicity defect of a sequence of laws one period apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CesaroDefect {
    /// `sum_m p_m * d_BL(p_m law_{m+1}, p_m law_m)`: restricted laws as
    /// sub-probability measures of mass `p_m`.
    pub restricted: f64,
    /// `sum_m p_m * d_BL(law_{m+1}, law_m)`; dominates `restricted`.
    pub unrestricted: f64,
    /// Unweighted consecutive distances `d_BL(law_{m+1}, law_m)`.
    pub terms: Vec<f64>,
}

/// `weights`, when given, holds one `p_m` per consecutive pair; the default
/// is `1 / (n + 1)` for `n + 1` laws.
pub fn cesaro_defect(
    laws: &[EmpiricalMeasure],
    weights: Option<&[f64]>,
) -> Result<CesaroDefect, BlError> {
    if laws.len() < 2 {
        return Err(BlError::InvalidMeasure("need at least two laws".into()));
    }
    let pairs = laws.len() - 1;
    let p: Vec<f64> = match weights {
        Some(w) if w.len() != pairs => {
            return Err(BlError::InvalidMeasure(format!(
                "{} weights for {pairs} consecutive pairs",
                w.len()
            )))
        }
        Some(w) => {
            if let Some(bad) = w.iter().find(|v| !(**v >= 0.0)) {
                return Err(BlError::InvalidMeasure(format!("bad weight {bad}")));
            }
            w.to_vec()
        }
        None => vec![1.0 / laws.len() as f64; pairs],
    };
    let mut restricted = 0.0;
    let mut unrestricted = 0.0;
    let mut terms = Vec::with_capacity(pairs);
    for m in 0..pairs {
        let full = dbl(&laws[m + 1], &laws[m])?.distance;
        let sub = dbl(&laws[m + 1].scaled(p[m]), &laws[m].scaled(p[m]))?.distance;
        restricted += p[m] * sub;
        unrestricted += p[m] * full;
        terms.push(full);
    }
    Ok(CesaroDefect {
        restricted,
        unrestricted,
        terms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64], weights: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::from_flat(1, points.to_vec(), weights.to_vec()).unwrap()
    }

    #[test]
    fn identical_measures() {
        let mu = line(&[0.0, 0.3, 0.9], &[0.2, 0.5, 0.3]);
        assert_eq!(dbl(&mu, &mu).unwrap().distance, 0.0);
    }

    #[test]
    fn two_diracs() {
        let r = dbl(&EmpiricalMeasure::dirac(&[0.0]), &EmpiricalMeasure::dirac(&[1.0])).unwrap();
        assert!((r.distance - 1.0).abs() < 1e-12);
        let r = dbl(&EmpiricalMeasure::dirac(&[0.0]), &EmpiricalMeasure::dirac(&[3.0])).unwrap();
        assert!((r.distance - 2.0).abs() < 1e-12);
        let r = dbl_with(
            &EmpiricalMeasure::dirac(&[0.0]),
            &EmpiricalMeasure::dirac(&[3.0]),
            Method::Simplex,
        )
        .unwrap();
        assert!((r.distance - 2.0).abs() < 1e-12);
    }

    #[test]
    fn witness_is_feasible() {
        let mu = line(&[0.0, 0.2, 0.5, 1.7], &[0.1, 0.4, 0.2, 0.3]);
        let nu = line(&[0.1, 0.5, 0.6], &[0.5, 0.25, 0.25]);
        for method in [Method::Auto, Method::Flow, Method::Simplex] {
            let r = dbl_with(&mu, &nu, method).unwrap();
            for i in 0..r.support.len() {
                assert!(r.witness[i].abs() <= 1.0 + 1e-9);
                for j in 0..r.support.len() {
                    let d = (r.support[i][0] - r.support[j][0]).abs();
                    assert!(r.witness[i] - r.witness[j] <= d + 1e-9);
                }
            }
        }
        let a = dbl_with(&mu, &nu, Method::Auto).unwrap().distance;
        let b = dbl_with(&mu, &nu, Method::Simplex).unwrap().distance;
        let c = dbl_with(&mu, &nu, Method::Flow).unwrap().distance;
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        assert!((a - c).abs() < 1e-9, "{a} vs {c}");
    }

    #[test]
    fn dimension_mismatch() {
        let a = EmpiricalMeasure::dirac(&[0.0]);
        let b = EmpiricalMeasure::dirac(&[0.0, 1.0]);
        assert_eq!(dbl(&a, &b), Err(BlError::DimensionMismatch(1, 2)));
    }

    #[test]
    fn snapping_merges() {
        let mu = line(&[0.101, 0.099, 0.52], &[0.25, 0.25, 0.5]);
        let s = mu.snapped(0.1, &[0.0]);
        assert_eq!(s.len(), 2);
        assert!((s.weights()[0] - 0.5).abs() < 1e-15);
        assert!((s.point(0)[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn cesaro_examples() {
        let d0 = EmpiricalMeasure::dirac(&[0.0]);
        let d1 = EmpiricalMeasure::dirac(&[1.0]);
        let same = cesaro_defect(&[d0.clone(), d0.clone(), d0.clone()], None).unwrap();
        assert_eq!(same.restricted, 0.0);
        assert_eq!(same.unrestricted, 0.0);

        let two = cesaro_defect(&[d0.clone(), d1.clone()], None).unwrap();
        assert!((two.restricted - 0.25).abs() < 1e-12);

        let alt = cesaro_defect(&[d0.clone(), d1.clone(), d0.clone(), d1.clone()], None).unwrap();
        assert!((alt.unrestricted - 0.75).abs() < 1e-12);
        assert!((alt.restricted - 3.0 / 16.0).abs() < 1e-12);
        assert!(alt.restricted <= alt.unrestricted);

        assert!(cesaro_defect(&[d0.clone()], None).is_err());
        assert!(cesaro_defect(&[d0.clone(), d1], Some(&[0.5, 0.5])).is_err());
    }
}
