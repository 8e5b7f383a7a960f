//! Reflected Euler-Maruyama paths in a box and the periodicity diagnostic.

use periodic_fpe::sde::{periodicity_diagnostic, sample_laws, InitialLaw, SdeSystem};

fn main() {
    let sys = SdeSystem::scalar("-4*(x - 0.3*sin(2*pi*t))", "0.5", 1.0, -1.0, 1.0).unwrap();
    let batch = sample_laws(&sys, &InitialLaw::Point(vec![0.9]), 4000, 12, 1.0 / 256.0, 7).unwrap();
    let total: u64 = batch.reflection_counts.iter().sum();
    println!("{} paths, {} reflections", batch.paths, total);

    let report = periodicity_diagnostic(&batch, &sys.domain, 6).unwrap();
    for (m, d) in report.cesaro.terms.iter().enumerate() {
        println!("period {m:>2} -> {:>2}: d_BL {:.4}", m + 1, d);
    }
    println!("late pairwise max {:.4}", report.late_pairwise_max);
}
