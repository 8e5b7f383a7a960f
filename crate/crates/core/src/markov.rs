//! Periodicity in distribution for finite Markov chains.
//!
//! Matrices are column-stochastic so that `P * x` maps a distribution to a
//! distribution. Row-stochastic input is transposed on load.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TOL: f64 = 1e-9;
const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarkovError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix must be square and non-empty, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("entry ({row}, {col}) = {value} is not a probability")]
    BadEntry { row: usize, col: usize, value: f64 },
    #[error("column {col} sums to {sum}, expected 1")]
    NotStochastic { col: usize, sum: f64 },
    #[error("invalid distribution: {0}")]
    BadDistribution(String),
    #[error("invalid argument: {0}")]
    BadArgument(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix(DMatrix<f64>);

impl TransitionMatrix {
    /// Validates a column-stochastic matrix.
    pub fn new(entries: DMatrix<f64>) -> Result<Self, MarkovError> {
        let (rows, cols) = entries.shape();
        if rows != cols || rows == 0 {
            return Err(MarkovError::NotSquare { rows, cols });
        }
        for (col, column) in entries.column_iter().enumerate() {
            for (row, &value) in column.iter().enumerate() {
                if !(0.0..=1.0).contains(&value) {
                    return Err(MarkovError::BadEntry { row, col, value });
                }
            }
            let sum: f64 = column.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(MarkovError::NotStochastic { col, sum });
            }
        }
        Ok(Self(entries))
    }

    /// Builds from rows as written in a file. With `row_stochastic` the rows
    /// are the outgoing distributions and the matrix is transposed.
    pub fn from_rows(rows: &[Vec<f64>], row_stochastic: bool) -> Result<Self, MarkovError> {
        let m = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != m) {
            return Err(MarkovError::NotSquare {
                rows: m,
                cols: bad.len(),
            });
        }
        let mat = DMatrix::from_fn(m, m, |i, j| rows[i][j]);
        Self::new(if row_stochastic { mat.transpose() } else { mat })
    }

    pub fn identity(m: usize) -> Self {
        Self(DMatrix::identity(m, m))
    }

    /// Column-stochastic matrix of the map `state i -> perm[i]`.
    pub fn permutation(perm: &[usize]) -> Result<Self, MarkovError> {
        let m = perm.len();
        let mut seen = vec![false; m];
        let mut mat = DMatrix::zeros(m, m);
        for (from, &to) in perm.iter().enumerate() {
            if to >= m || seen[to] {
                return Err(MarkovError::BadArgument(format!(
                    "{perm:?} is not a permutation"
                )));
            }
            seen[to] = true;
            mat[(to, from)] = 1.0;
        }
        Ok(Self(mat))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionVector(DVector<f64>);

impl DistributionVector {
    pub fn new(probs: Vec<f64>) -> Result<Self, MarkovError> {
        if probs.is_empty() {
            return Err(MarkovError::BadDistribution("empty".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(**p >= 0.0)) {
            return Err(MarkovError::BadDistribution(format!("negative entry {p}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(MarkovError::BadDistribution(format!("sums to {sum}")));
        }
        Ok(Self(DVector::from_vec(probs)))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }
}

/// Result of scanning `k = 1..=n_max` for `P^k x0 = x0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodReport {
    pub period: Option<usize>,
    /// `residuals[k - 1] = max_i |(P^k x0)_i - x0_i|`.
    pub residuals: Vec<f64>,
    /// Whether `P^N = I` also holds at the detected period.
    pub strong: bool,
    pub tol: f64,
}

fn check_dim(p: &TransitionMatrix, len: usize) -> Result<(), MarkovError> {
    if p.dim() != len {
        return Err(MarkovError::DimensionMismatch {
            expected: p.dim(),
            found: len,
        });
    }
    Ok(())
}

pub fn step(p: &TransitionMatrix, x: &DistributionVector) -> Result<DistributionVector, MarkovError> {
    check_dim(p, x.len())?;
    Ok(DistributionVector(&p.0 * &x.0))
}

/// Cache of `P^(2^j)` for repeated squaring.
#[derive(Debug, Clone)]
pub struct PowerCache {
    squares: Vec<DMatrix<f64>>,
}

impl PowerCache {
    pub fn new(p: &TransitionMatrix) -> Self {
        Self {
            squares: vec![p.0.clone()],
        }
    }

    pub fn power(&mut self, n: usize) -> DMatrix<f64> {
        let m = self.squares[0].nrows();
        let mut result = DMatrix::identity(m, m);
        let mut bits = n;
        let mut j = 0;
        while bits > 0 {
            if j == self.squares.len() {
                let last = &self.squares[j - 1];
                let sq = last * last;
                self.squares.push(sq);
            }
            if bits & 1 == 1 {
                result = &self.squares[j] * result;
            }
            bits >>= 1;
            j += 1;
        }
        result
    }
}

fn max_abs_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn distance_to_identity(a: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for ((i, j), v) in a.iter().enumerate().map(|(k, v)| ((k % a.nrows(), k / a.nrows()), v)) {
        let target = if i == j { 1.0 } else { 0.0 };
        worst = worst.max((v - target).abs());
    }
    worst
}

pub fn detect_period(
    p: &TransitionMatrix,
    x0: &DistributionVector,
    n_max: usize,
    tol: f64,
) -> Result<PeriodReport, MarkovError> {
    check_dim(p, x0.len())?;
    if n_max == 0 {
        return Err(MarkovError::BadArgument("n_max must be at least 1".into()));
    }
    if !(tol > 0.0) {
        return Err(MarkovError::BadArgument("tol must be positive".into()));
    }
    // incremental stepping: one mat-vec per k is cheaper than any power lookup
    let mut residuals = Vec::with_capacity(n_max);
    let mut period = None;
    let mut x = x0.0.clone();
    for k in 1..=n_max {
        x = &p.0 * x;
        let r = max_abs_diff(&x, &x0.0);
        residuals.push(r);
        if period.is_none() && r <= tol {
            period = Some(k);
        }
    }
    let strong = match period {
        Some(n) => distance_to_identity(&PowerCache::new(p).power(n)) <= tol,
        None => false,
    };
    Ok(PeriodReport {
        period,
        residuals,
        strong,
        tol,
    })
}

/// Smallest `N <= n_max` with `max |P^N - I| <= tol`.
pub fn detect_strong_period(
    p: &TransitionMatrix,
    n_max: usize,
    tol: f64,
) -> Result<Option<usize>, MarkovError> {
    if n_max == 0 {
        return Err(MarkovError::BadArgument("n_max must be at least 1".into()));
    }
    let mut power = p.0.clone();
    for k in 1..=n_max {
        if distance_to_identity(&power) <= tol {
            return Ok(Some(k));
        }
        power = &p.0 * power;
    }
    Ok(None)
}

/// Reads a matrix or vector CSV: rows of comma separated floats.
pub fn read_csv_rows(text: &str) -> Result<Vec<Vec<f64>>, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| e.to_string())?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row = record
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| format!("row {}: `{s}` is not a number", line + 1))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(v: &[f64]) -> DistributionVector {
        DistributionVector::new(v.to_vec()).unwrap()
    }

    /// The five-state example, written as displayed (row-stochastic).
    pub(crate) fn five_state(a1: f64, a2: f64) -> TransitionMatrix {
        let rows = vec![
            vec![a1, 1.0 - a1, 0.0, 0.0, 0.0],
            vec![a2, 1.0 - a2, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0, 0.0, 0.0],
        ];
        TransitionMatrix::from_rows(&rows, true).unwrap()
    }

    #[test]
    fn identity_step() {
        let x = dist(&[1.0, 0.0, 0.0]);
        assert_eq!(step(&TransitionMatrix::identity(3), &x).unwrap(), x);
    }

    #[test]
    fn cycle_step() {
        let p = TransitionMatrix::permutation(&[1, 2, 0]).unwrap();
        let y = step(&p, &dist(&[1.0, 0.0, 0.0])).unwrap();
        assert_eq!(y.probs(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn five_state_step() {
        let p = five_state(0.3, 0.7);
        let x = dist(&[0.1, 0.1, 0.35, 0.4, 0.05]);
        let y = step(&p, &x).unwrap();
        // direct multiply of the transposed display
        let expected = [0.3 * 0.1 + 0.7 * 0.1, 0.7 * 0.1 + 0.3 * 0.1, 0.05, 0.35, 0.4];
        for (a, b) in y.probs().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn row_stochastic_without_flag_is_rejected() {
        let rows = vec![vec![0.2, 0.8], vec![0.5, 0.5]];
        assert!(matches!(
            TransitionMatrix::from_rows(&rows, false),
            Err(MarkovError::NotStochastic { .. })
        ));
        assert!(TransitionMatrix::from_rows(&rows, true).is_ok());
    }

    #[test]
    fn dimension_mismatch() {
        let p = TransitionMatrix::identity(3);
        assert!(matches!(
            step(&p, &dist(&[0.5, 0.5])),
            Err(MarkovError::DimensionMismatch { .. })
        ));
        assert!(detect_period(&p, &dist(&[1.0]), 4, 1e-9).is_err());
    }

    #[test]
    fn identity_has_period_one() {
        let r = detect_period(&TransitionMatrix::identity(4), &dist(&[0.25; 4]), 5, DEFAULT_TOL)
            .unwrap();
        assert_eq!(r.period, Some(1));
        assert!(r.strong);
        assert_eq!(r.residuals.len(), 5);
    }

    #[test]
    fn embedded_three_cycle() {
        let p = TransitionMatrix::permutation(&[0, 1, 3, 4, 2]).unwrap();
        let r = detect_period(&p, &dist(&[0.1, 0.1, 0.35, 0.4, 0.05]), 10, DEFAULT_TOL).unwrap();
        assert_eq!(r.period, Some(3));
        assert!(r.strong);
        assert!(r.residuals[0] > 0.1 && r.residuals[1] > 0.1);
    }

    #[test]
    fn averaging_chain_is_stationary() {
        let p = TransitionMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]], false).unwrap();
        let r = detect_period(&p, &dist(&[0.5, 0.5]), 3, DEFAULT_TOL).unwrap();
        assert_eq!(r.period, Some(1));
        assert!(!r.strong);
    }

    #[test]
    fn strong_periods() {
        assert_eq!(
            detect_strong_period(&TransitionMatrix::identity(3), 10, DEFAULT_TOL).unwrap(),
            Some(1)
        );
        let p = TransitionMatrix::permutation(&[1, 0, 3, 4, 2]).unwrap();
        assert_eq!(detect_strong_period(&p, 20, DEFAULT_TOL).unwrap(), Some(6));
        assert_eq!(detect_strong_period(&p, 5, DEFAULT_TOL).unwrap(), None);
        let m = 4;
        let flat = TransitionMatrix::new(DMatrix::from_element(m, m, 1.0 / m as f64)).unwrap();
        assert_eq!(detect_strong_period(&flat, 64, DEFAULT_TOL).unwrap(), None);
    }

    #[test]
    fn power_cache_matches_iteration() {
        let p = five_state(0.25, 0.6);
        let mut cache = PowerCache::new(&p);
        let mut iter = DMatrix::identity(5, 5);
        for n in 0..20 {
            let diff = (&cache.power(n) - &iter).abs().max();
            assert!(diff < 1e-12, "n = {n}: {diff}");
            iter = p.matrix() * iter;
        }
    }

    #[test]
    fn csv_rows() {
        let rows = read_csv_rows("1, 0\n0,1\n\n").unwrap();
        assert_eq!(rows, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(read_csv_rows("1,a").is_err());
    }
}
