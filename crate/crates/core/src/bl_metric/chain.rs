//! Exact solver for the bounded-Lipschitz program on the real line.
//!
//! On sorted points only neighbouring Lipschitz constraints are active (the
//! others follow by the triangle inequality along the line), so the program
//! is a chain: maximise `sum c_k h_k` with `|h_k| <= 1` and
//! `|h_{k+1} - h_k| <= gap_k`. The value function of a chain prefix is
//! concave and piecewise linear in the last variable; it is carried forward
//! as a breakpoint list and the maximiser is recovered by backtracking.

/// Concave piecewise-linear function on `[-1, 1]`, given by breakpoints with
/// strictly increasing abscissae starting at -1 and ending at 1.
#[derive(Debug, Clone)]
struct Concave {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

const MERGE_EPS: f64 = 1e-15;

impl Concave {
    fn linear(c: f64) -> Self {
        Self {
            xs: vec![-1.0, 1.0],
            ys: vec![-c, c],
        }
    }

    fn argmax(&self) -> (f64, f64) {
        let mut best = 0;
        for i in 1..self.ys.len() {
            if self.ys[i] > self.ys[best] {
                best = i;
            }
        }
        (self.xs[best], self.ys[best])
    }

    fn eval(&self, x: f64) -> f64 {
        let k = self.xs.partition_point(|&v| v < x);
        if k == 0 {
            return self.ys[0];
        }
        if k == self.xs.len() {
            return self.ys[k - 1];
        }
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        let (y0, y1) = (self.ys[k - 1], self.ys[k]);
        if x1 - x0 <= 0.0 {
            return y1;
        }
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// `x -> max { f(y) : |y - x| <= gap, |y| <= 1 }`, then plus `c * x`.
    fn relax_and_add(&self, gap: f64, c: f64) -> Self {
        let (peak_x, peak_y) = self.argmax();
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(self.xs.len() + 4);
        for (&x, &y) in self.xs.iter().zip(&self.ys) {
            if x < peak_x {
                pts.push((x - gap, y));
            }
        }
        pts.push((peak_x - gap, peak_y));
        pts.push((peak_x + gap, peak_y));
        for (&x, &y) in self.xs.iter().zip(&self.ys) {
            if x > peak_x {
                pts.push((x + gap, y));
            }
        }
        let shifted = Concave {
            xs: pts.iter().map(|p| p.0).collect(),
            ys: pts.iter().map(|p| p.1).collect(),
        };
        let mut xs = vec![-1.0];
        let mut ys = vec![shifted.eval(-1.0)];
        for (&x, &y) in shifted.xs.iter().zip(&shifted.ys) {
            if x > -1.0 && x < 1.0 && x - xs[xs.len() - 1] > MERGE_EPS {
                xs.push(x);
                ys.push(y);
            }
        }
        let right = shifted.eval(1.0);
        if 1.0 - xs[xs.len() - 1] > MERGE_EPS {
            xs.push(1.0);
            ys.push(right);
        } else {
            let last = xs.len() - 1;
            xs[last] = 1.0;
            ys[last] = right;
        }
        for (x, y) in xs.iter().zip(ys.iter_mut()) {
            *y += c * x;
        }
        Concave { xs, ys }
    }
}

/// Maximises `sum c_k h_k` over the chain. `gaps[k]` is the distance between
/// point `k` and point `k + 1` (sorted order). Returns `(value, h)`.
pub fn solve_chain(c: &[f64], gaps: &[f64]) -> (f64, Vec<f64>) {
    let k = c.len();
    if k == 0 {
        return (0.0, Vec::new());
    }
    assert_eq!(gaps.len() + 1, k, "gaps must have one entry fewer than points");
    let mut stages = Vec::with_capacity(k);
    stages.push(Concave::linear(c[0]));
    for i in 1..k {
        // gaps of 2 or more cannot bind
        let next = stages[i - 1].relax_and_add(gaps[i - 1].min(2.0), c[i]);
        stages.push(next);
    }
    let mut h = vec![0.0; k];
    let (x_last, _) = stages[k - 1].argmax();
    h[k - 1] = x_last;
    for i in (0..k - 1).rev() {
        let (peak, _) = stages[i].argmax();
        let lo = (h[i + 1] - gaps[i]).max(-1.0);
        let hi = (h[i + 1] + gaps[i]).min(1.0);
        h[i] = peak.clamp(lo, hi);
    }
    let value = c.iter().zip(&h).map(|(a, b)| a * b).sum();
    (value, h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(c: &[f64], gaps: &[f64]) -> f64 {
        // grid search with step 0.01
        let steps: Vec<f64> = (0..=200).map(|i| -1.0 + 0.01 * i as f64).collect();
        let mut best = f64::NEG_INFINITY;
        let k = c.len();
        let mut idx = vec![0usize; k];
        loop {
            let h: Vec<f64> = idx.iter().map(|&i| steps[i]).collect();
            let ok = (0..k - 1).all(|i| (h[i + 1] - h[i]).abs() <= gaps[i] + 1e-12);
            if ok {
                best = best.max(c.iter().zip(&h).map(|(a, b)| a * b).sum());
            }
            let mut p = 0;
            loop {
                if p == k {
                    return best;
                }
                idx[p] += 1;
                if idx[p] < steps.len() {
                    break;
                }
                idx[p] = 0;
                p += 1;
            }
        }
    }

    #[test]
    fn two_diracs() {
        let (v, h) = solve_chain(&[1.0, -1.0], &[1.0]);
        assert!((v - 1.0).abs() < 1e-15);
        assert!((h[0] - h[1]).abs() <= 1.0 + 1e-15);
        let (v, _) = solve_chain(&[1.0, -1.0], &[3.0]);
        assert!((v - 2.0).abs() < 1e-15);
    }

    #[test]
    fn matches_grid_search_on_three_points() {
        let cases = [
            (vec![0.3, -0.5, 0.2], vec![0.4, 0.25]),
            (vec![-0.1, 0.6, -0.5], vec![1.3, 0.1]),
            (vec![0.5, 0.0, -0.5], vec![0.3, 0.3]),
            (vec![0.2, 0.2, -0.1], vec![0.05, 2.5]),
        ];
        for (c, g) in cases {
            let (v, h) = solve_chain(&c, &g);
            let oracle = brute(&c, &g);
            assert!((v - oracle).abs() < 2e-2, "{c:?} {g:?}: {v} vs {oracle}");
            assert!(v >= oracle - 1e-12);
            for i in 0..2 {
                assert!((h[i + 1] - h[i]).abs() <= g[i] + 1e-12);
            }
        }
    }
}
