//! The bounded-Lipschitz program as a transport problem.
//!
//! By duality, `sup { sum c_i h_i : |h| <= 1, Lip(h) <= 1 }` is the cheapest
//! way to cancel the charge `c`: moving mass costs `min(|x - y|, 2)`, and
//! creating or destroying a unit at a ground node costs 1. Sources are the
//! positive atoms plus ground, sinks the negative atoms plus ground. The
//! transport problem is solved by successive shortest paths with node
//! potentials; the test function is the c-transform of the sink potentials.

use super::euclid;

/// Fraction of the total mass below which residual supply counts as zero.
const MASS_EPS: f64 = 1e-13;

struct Transport<'a> {
    pts: &'a [&'a [f64]],
    /// Atom index of each source; `None` is ground.
    sources: Vec<Option<usize>>,
    sinks: Vec<Option<usize>>,
}

impl Transport<'_> {
    fn cost(&self, s: usize, t: usize) -> f64 {
        match (self.sources[s], self.sinks[t]) {
            (Some(i), Some(j)) => euclid(self.pts[i], self.pts[j]).min(2.0),
            (None, None) => 0.0,
            _ => 1.0,
        }
    }
}

/// Returns the optimal value and the optimal test function on `pts`.
pub fn solve_flow(c: &[f64], pts: &[&[f64]]) -> (f64, Vec<f64>) {
    let mut sources: Vec<Option<usize>> = (0..c.len()).filter(|&i| c[i] > 0.0).map(Some).collect();
    let mut sinks: Vec<Option<usize>> = (0..c.len()).filter(|&i| c[i] < 0.0).map(Some).collect();
    let pos: f64 = c.iter().filter(|v| **v > 0.0).sum();
    let neg: f64 = -c.iter().filter(|v| **v < 0.0).sum::<f64>();
    // spare mass through ground keeps the ground-to-ground arc in use, which
    // pins the two ground potentials together
    let spare = (pos + neg).max(1.0);
    let mut supply: Vec<f64> = sources.iter().map(|s| c[s.unwrap()]).collect();
    let mut demand: Vec<f64> = sinks.iter().map(|t| -c[t.unwrap()]).collect();
    sources.push(None);
    supply.push(neg + spare);
    sinks.push(None);
    demand.push(pos + spare);
    let tp = Transport { pts, sources, sinks };
    let (ns, nt) = (supply.len(), demand.len());
    let eps = MASS_EPS * (pos + neg + spare);

    let mut cost = vec![0.0; ns * nt];
    for s in 0..ns {
        for t in 0..nt {
            cost[s * nt + t] = tp.cost(s, t);
        }
    }
    let mut flow = vec![0.0; ns * nt];
    let mut pot_s = vec![0.0; ns];
    let mut pot_t = vec![0.0; nt];
    let mut dist_s = vec![0.0; ns];
    let mut dist_t = vec![0.0; nt];
    let mut done_s = vec![false; ns];
    let mut done_t = vec![false; nt];
    let mut pred_t = vec![0usize; nt];
    // sink through which a source was reached, if not a root
    let mut pred_s: Vec<Option<usize>> = vec![None; ns];

    loop {
        if supply.iter().all(|&v| v <= eps) {
            break;
        }
        for s in 0..ns {
            dist_s[s] = if supply[s] > eps { 0.0 } else { f64::INFINITY };
            done_s[s] = false;
            pred_s[s] = None;
        }
        dist_t.iter_mut().for_each(|d| *d = f64::INFINITY);
        done_t.iter_mut().for_each(|d| *d = false);
        let target = loop {
            let (mut best, mut pick) = (f64::INFINITY, None);
            for s in 0..ns {
                if !done_s[s] && dist_s[s] < best {
                    best = dist_s[s];
                    pick = Some((true, s));
                }
            }
            for t in 0..nt {
                if !done_t[t] && dist_t[t] < best {
                    best = dist_t[t];
                    pick = Some((false, t));
                }
            }
            // a sink with demand is always reachable from ground
            let (is_source, k) = pick.expect("transport graph is connected");
            if is_source {
                done_s[k] = true;
                let base = dist_s[k] + pot_s[k];
                let row = &cost[k * nt..(k + 1) * nt];
                for t in 0..nt {
                    let nd = base + row[t] - pot_t[t];
                    if !done_t[t] && nd < dist_t[t] {
                        dist_t[t] = nd;
                        pred_t[t] = k;
                    }
                }
            } else {
                done_t[k] = true;
                if demand[k] > eps {
                    break k;
                }
                let base = dist_t[k] + pot_t[k];
                for s in 0..ns {
                    if !done_s[s] && flow[s * nt + k] > 0.0 {
                        let nd = base - cost[s * nt + k] - pot_s[s];
                        if nd < dist_s[s] {
                            dist_s[s] = nd;
                            pred_s[s] = Some(k);
                        }
                    }
                }
            }
        };
        let reach = dist_t[target];
        for s in 0..ns {
            pot_s[s] += dist_s[s].min(reach);
        }
        for t in 0..nt {
            pot_t[t] += dist_t[t].min(reach);
        }

        let mut amount = demand[target];
        let mut t = target;
        let root = loop {
            let s = pred_t[t];
            match pred_s[s] {
                None => break s,
                Some(prev) => {
                    amount = amount.min(flow[s * nt + prev]);
                    t = prev;
                }
            }
        };
        amount = amount.min(supply[root]);
        let mut t = target;
        loop {
            let s = pred_t[t];
            flow[s * nt + t] += amount;
            match pred_s[s] {
                None => break,
                Some(prev) => {
                    let f = &mut flow[s * nt + prev];
                    *f -= amount;
                    if *f <= eps {
                        *f = 0.0;
                    }
                    t = prev;
                }
            }
        }
        supply[root] -= amount;
        demand[target] -= amount;
    }

    let value: f64 = flow.iter().zip(&cost).map(|(f, c)| f * c).sum();
    // sink side values h_t = -pot_t; ground sink sets the zero level
    let ground = -pot_t[nt - 1];
    let witness = pts
        .iter()
        .map(|x| {
            let f = (0..nt)
                .map(|t| {
                    let d = match tp.sinks[t] {
                        Some(j) => euclid(x, pts[j]).min(2.0),
                        None => 1.0,
                    };
                    -pot_t[t] + d
                })
                .fold(f64::INFINITY, f64::min);
            (f - ground).clamp(-1.0, 1.0)
        })
        .collect();
    (value, witness)
}
