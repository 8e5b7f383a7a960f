//! Dense tableau simplex for `max c.y  s.t.  A y <= b, y >= 0` with `b >= 0`.
//!
//! With a nonnegative right-hand side the slack basis is feasible, so no
//! phase one is needed. Pivoting is Dantzig's rule with lowest-index tie
//! breaks, switching to Bland's rule after a run of degenerate pivots.

const PIVOT_EPS: f64 = 1e-12;
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { y: Vec<f64>, objective: f64 },
    IterationLimit { iterations: usize },
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct DenseLp {
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

impl DenseLp {
    pub fn solve(&self, max_iter: usize) -> LpOutcome {
        let n = self.objective.len();
        let m = self.rows.len();
        debug_assert!(self.rhs.iter().all(|b| *b >= 0.0));
        let width = n + m + 1;
        // row-major tableau; last row is the reduced cost row
        let mut tab = vec![0.0; (m + 1) * width];
        for (i, row) in self.rows.iter().enumerate() {
            tab[i * width..i * width + n].copy_from_slice(row);
            tab[i * width + n + i] = 1.0;
            tab[i * width + width - 1] = self.rhs[i];
        }
        for j in 0..n {
            tab[m * width + j] = -self.objective[j];
        }
        let mut basis: Vec<usize> = (n..n + m).collect();
        let mut degenerate = 0usize;

        for iter in 0..=max_iter {
            let cost = &tab[m * width..m * width + width - 1];
            let entering = if degenerate >= DEGENERATE_RUN {
                cost.iter().position(|&v| v < -PIVOT_EPS)
            } else {
                let mut best = None;
                let mut best_val = -PIVOT_EPS;
                for (j, &v) in cost.iter().enumerate() {
                    if v < best_val {
                        best_val = v;
                        best = Some(j);
                    }
                }
                best
            };
            let Some(col) = entering else {
                let mut y = vec![0.0; n];
                for (i, &var) in basis.iter().enumerate() {
                    if var < n {
                        y[var] = tab[i * width + width - 1];
                    }
                }
                let objective = self.objective.iter().zip(&y).map(|(c, v)| c * v).sum();
                return LpOutcome::Optimal { y, objective };
            };

            let mut leaving: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for i in 0..m {
                let a = tab[i * width + col];
                if a > PIVOT_EPS {
                    let ratio = tab[i * width + width - 1] / a;
                    let better = match leaving {
                        None => true,
                        Some(l) => {
                            ratio < best_ratio - 1e-14
                                || (ratio <= best_ratio + 1e-14 && basis[i] < basis[l])
                        }
                    };
                    if better {
                        best_ratio = ratio.min(best_ratio);
                        leaving = Some(i);
                    }
                }
            }
            if iter == max_iter {
                break;
            }
            let Some(row) = leaving else {
                return LpOutcome::Unbounded;
            };
            if best_ratio <= 1e-14 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }

            let pivot = tab[row * width + col];
            for v in &mut tab[row * width..(row + 1) * width] {
                *v /= pivot;
            }
            let pivot_row: Vec<f64> = tab[row * width..(row + 1) * width].to_vec();
            for i in 0..=m {
                if i == row {
                    continue;
                }
                let factor = tab[i * width + col];
                if factor != 0.0 {
                    let dst = &mut tab[i * width..(i + 1) * width];
                    for (d, p) in dst.iter_mut().zip(&pivot_row) {
                        *d -= factor * p;
                    }
                    dst[col] = 0.0;
                }
            }
            basis[row] = col;
        }
        LpOutcome::IterationLimit {
            iterations: max_iter,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let lp = DenseLp {
            objective: vec![3.0, 5.0],
            rows: vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
            rhs: vec![4.0, 12.0, 18.0],
        };
        match lp.solve(100) {
            LpOutcome::Optimal { y, objective } => {
                assert!((objective - 36.0).abs() < 1e-12);
                assert!((y[0] - 2.0).abs() < 1e-12 && (y[1] - 6.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unbounded_detected() {
        let lp = DenseLp {
            objective: vec![1.0, 1.0],
            rows: vec![vec![1.0, -1.0]],
            rhs: vec![1.0],
        };
        assert_eq!(lp.solve(100), LpOutcome::Unbounded);
    }

    #[test]
    fn iteration_limit_reported() {
        let lp = DenseLp {
            objective: vec![3.0, 5.0],
            rows: vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
            rhs: vec![4.0, 12.0, 18.0],
        };
        assert!(matches!(lp.solve(1), LpOutcome::IterationLimit { .. }));
    }
}
