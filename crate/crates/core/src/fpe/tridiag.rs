/// Tridiagonal matrix stored by diagonals. `lower[0]` and `upper[n - 1]`
/// are unused.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiag {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiag {
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `alpha * I + beta * self`
    pub fn affine(&self, alpha: f64, beta: f64) -> Self {
        Self {
            lower: self.lower.iter().map(|v| beta * v).collect(),
            diag: self.diag.iter().map(|v| alpha + beta * v).collect(),
            upper: self.upper.iter().map(|v| beta * v).collect(),
        }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(x.len(), n);
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.lower[i] * x[i - 1];
            }
            if i + 1 < n {
                s += self.upper[i] * x[i + 1];
            }
            out[i] = s;
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.len();
        nalgebra::DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if j + 1 == i {
                self.lower[i]
            } else if i + 1 == j {
                self.upper[i]
            } else {
                0.0
            }
        })
    }

    /// Thomas algorithm, in place on `rhs`. Returns `None` on a vanishing
    /// pivot.
    pub fn solve_in_place(&self, rhs: &mut [f64], scratch: &mut Vec<f64>) -> Option<()> {
        let n = self.len();
        scratch.clear();
        scratch.resize(n, 0.0);
        let mut pivot = self.diag[0];
        if !pivot.is_finite() || pivot.abs() < 1e-300 {
            return None;
        }
        rhs[0] /= pivot;
        for i in 1..n {
            scratch[i] = self.upper[i - 1] / pivot;
            pivot = self.diag[i] - self.lower[i] * scratch[i];
            if !pivot.is_finite() || pivot.abs() < 1e-300 {
                return None;
            }
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) / pivot;
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= scratch[i + 1] * rhs[i + 1];
        }
        Some(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_matches_dense() {
        let m = Tridiag {
            lower: vec![0.0, -1.0, 0.5, -0.2],
            diag: vec![4.0, 3.0, 5.0, 2.5],
            upper: vec![1.0, -0.7, 0.3, 0.0],
        };
        let b = [1.0, -2.0, 0.5, 3.0];
        let mut x = b.to_vec();
        m.solve_in_place(&mut x, &mut Vec::new()).unwrap();
        let mut back = vec![0.0; 4];
        m.apply(&x, &mut back);
        for (u, v) in back.iter().zip(b) {
            assert!((u - v).abs() < 1e-14);
        }
        let dense = m.to_dense().lu().solve(&nalgebra::DVector::from_row_slice(&b)).unwrap();
        for (u, v) in x.iter().zip(dense.iter()) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_pivot() {
        let m = Tridiag {
            lower: vec![0.0, 1.0],
            diag: vec![0.0, 1.0],
            upper: vec![1.0, 0.0],
        };
        assert!(m.solve_in_place(&mut [1.0, 1.0], &mut Vec::new()).is_none());
    }
}
