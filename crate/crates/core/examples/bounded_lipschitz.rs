//! Bounded-Lipschitz distance between weighted point clouds.

use periodic_fpe::bl_metric::{dbl, dbl_with, EmpiricalMeasure, Method};

fn main() {
    for gap in [0.1, 0.5, 1.5, 3.0] {
        let d = dbl(&EmpiricalMeasure::dirac(&[0.0]), &EmpiricalMeasure::dirac(&[gap])).unwrap();
        println!("diracs {gap:>4} apart: {:.6}", d.distance);
    }

    let mu = EmpiricalMeasure::new(2, &[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.5, 0.3, 0.2]).unwrap();
    let nu = EmpiricalMeasure::new(2, &[vec![0.2, 0.1], vec![0.9, 0.4]], vec![0.6, 0.3]).unwrap();
    let flow = dbl_with(&mu, &nu, Method::Flow).unwrap();
    let lp = dbl_with(&mu, &nu, Method::Simplex).unwrap();
    println!("2D clouds: transport {:.9}, simplex {:.9}", flow.distance, lp.distance);
    for (x, h) in flow.support.iter().zip(&flow.witness) {
        println!("  h({:?}) = {:+.4}", x, h);
    }
}
