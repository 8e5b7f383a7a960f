//! Period of a distribution under a column-stochastic matrix.

use nalgebra::DMatrix;
use periodic_fpe::markov::{detect_period, detect_strong_period, DistributionVector, TransitionMatrix};

fn main() {
    // a 2-cycle glued to a 3-cycle
    let p = TransitionMatrix::permutation(&[1, 0, 3, 4, 2]).unwrap();
    let x0 = DistributionVector::new(vec![0.4, 0.1, 0.3, 0.1, 0.1]).unwrap();
    let report = detect_period(&p, &x0, 64, 1e-12).unwrap();
    println!("permutation: period {:?}, strong {}", report.period, report.strong);
    println!("strong period of P: {:?}", detect_strong_period(&p, 64, 1e-12).unwrap());

    // lazy chain: the initial law is not periodic unless it is stationary
    let lazy = TransitionMatrix::new(DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.1, 0.8])).unwrap();
    let x = DistributionVector::new(vec![0.5, 0.5]).unwrap();
    let stat = DistributionVector::new(vec![2.0 / 3.0, 1.0 / 3.0]).unwrap();
    println!("lazy chain from (1/2, 1/2): {:?}", detect_period(&lazy, &x, 64, 1e-12).unwrap().period);
    println!("lazy chain from stationary law: {:?}", detect_period(&lazy, &stat, 64, 1e-12).unwrap().period);
}
