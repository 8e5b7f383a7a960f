use proptest::prelude::*;

use periodic_fpe::bl_metric::{dbl, dbl_with, EmpiricalMeasure, Method};
use periodic_fpe::expr::{parse_expr, BinOp, Constant, Expr, Func, Var};
use periodic_fpe::fpe::{
    solve_ivp, BoundaryCondition, DensityField, FpCoefficients, Grid1D, Integrator, LinearProblem,
};
use periodic_fpe::markov::{detect_period, detect_strong_period, DistributionVector, TransitionMatrix};
use periodic_fpe::period_map::build_period_map;
use periodic_fpe::sde::{sample_laws, InitialLaw, SdeSystem};

fn expr_tree() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0.0f64..1e3).prop_map(Expr::Num),
        prop_oneof![Just(Var::T), Just(Var::X), Just(Var::U)].prop_map(Expr::Var),
        prop_oneof![Just(Constant::Pi), Just(Constant::E)].prop_map(Expr::Const),
    ];
    leaf.prop_recursive(4, 32, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (
                prop_oneof![
                    Just(BinOp::Add),
                    Just(BinOp::Sub),
                    Just(BinOp::Mul),
                    Just(BinOp::Div),
                    Just(BinOp::Pow)
                ],
                inner.clone(),
                inner.clone()
            )
                .prop_map(|(op, a, b)| Expr::binary(op, a, b)),
            (prop::sample::select(Func::ALL.to_vec()), inner).prop_map(|(f, a)| Expr::call(f, a)),
        ]
    })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn cycle_lcm(perm: &[usize]) -> usize {
    let mut seen = vec![false; perm.len()];
    let mut lcm = 1;
    for s in 0..perm.len() {
        let mut len = 0;
        let mut k = s;
        while !seen[k] {
            seen[k] = true;
            k = perm[k];
            len += 1;
        }
        if len > 0 {
            lcm = lcm / gcd(lcm, len) * len;
        }
    }
    lcm
}

fn measure(dim: usize) -> impl Strategy<Value = EmpiricalMeasure> {
    (1usize..5).prop_flat_map(move |k| {
        (
            prop::collection::vec(-3.0f64..3.0, k * dim),
            prop::collection::vec(0.01f64..1.0, k),
        )
            .prop_map(move |(coords, w)| EmpiricalMeasure::from_flat(dim, coords, w).unwrap())
    })
}

fn periodic_coeffs() -> impl Strategy<Value = (String, String)> {
    (0.4f64..1.5, -0.3f64..0.3, -2.0f64..2.0, -1.0f64..1.0).prop_map(|(a0, a1, b0, b1)| {
        (
            format!("{a0} + {a1}*sin(2*pi*t)*x^2"),
            format!("{b0}*x + {b1}*cos(2*pi*t)"),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn expr_display_parses_back(e in expr_tree()) {
        let text = e.to_string();
        prop_assert_eq!(parse_expr(&text).unwrap(), e);
    }

    #[test]
    fn permutation_order_is_cycle_lcm(perm in (1usize..10).prop_flat_map(|m| Just((0..m).collect::<Vec<_>>()).prop_shuffle())) {
        let p = TransitionMatrix::permutation(&perm).unwrap();
        prop_assert_eq!(detect_strong_period(&p, 64, 1e-12).unwrap(), Some(cycle_lcm(&perm)));
    }

    #[test]
    fn detected_period_is_minimal(
        perm in (1usize..8).prop_flat_map(|m| Just((0..m).collect::<Vec<_>>()).prop_shuffle()),
        raw in prop::collection::vec(0.01f64..1.0, 8),
    ) {
        let m = perm.len();
        let s: f64 = raw[..m].iter().sum();
        let x0 = DistributionVector::new(raw[..m].iter().map(|v| v / s).collect()).unwrap();
        let p = TransitionMatrix::permutation(&perm).unwrap();
        let tol = 1e-12;
        let report = detect_period(&p, &x0, 32, tol).unwrap();
        let n = report.period.expect("permutations are periodic");
        prop_assert!(report.residuals[n - 1] <= tol);
        prop_assert!(report.residuals[..n - 1].iter().all(|&r| r > tol));
        prop_assert_eq!(cycle_lcm(&perm) % n, 0);
    }

    #[test]
    fn dbl_is_a_bounded_metric(a in measure(1), b in measure(1), c in measure(1)) {
        let d = |x: &EmpiricalMeasure, y: &EmpiricalMeasure| dbl(x, y).unwrap().distance;
        prop_assert!(d(&a, &a).abs() < 1e-12);
        prop_assert!((d(&a, &b) - d(&b, &a)).abs() < 1e-10);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-10);
        prop_assert!(d(&a, &b) <= a.mass() + b.mass() + 1e-12);
    }

    #[test]
    fn dbl_solvers_agree(a in measure(2), b in measure(2)) {
        let flow = dbl_with(&a, &b, Method::Flow).unwrap();
        let simplex = dbl_with(&a, &b, Method::Simplex).unwrap();
        prop_assert!((flow.distance - simplex.distance).abs() < 1e-9, "{} vs {}", flow.distance, simplex.distance);
        let n = flow.support.len();
        for i in 0..n {
            prop_assert!(flow.witness[i].abs() <= 1.0);
            for j in 0..n {
                let dij: f64 = flow.support[i].iter().zip(&flow.support[j]).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
                prop_assert!(flow.witness[i] - flow.witness[j] <= dij + 1e-9);
            }
        }
    }

    #[test]
    fn dbl_chain_matches_flow_in_1d(a in measure(1), b in measure(1)) {
        let chain = dbl_with(&a, &b, Method::Auto).unwrap().distance;
        let flow = dbl_with(&a, &b, Method::Flow).unwrap().distance;
        prop_assert!((chain - flow).abs() < 1e-9, "{} vs {}", chain, flow);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn reflecting_flux_form_conserves_mass((a, b) in periodic_coeffs(), ie in any::<bool>()) {
        let grid = Grid1D::new(40, -1.0, 1.0).unwrap();
        let coeffs = FpCoefficients::parse(&a, &b, Some(1.0)).unwrap();
        let integrator = if ie { Integrator::ImplicitEuler } else { Integrator::CrankNicolson };
        let problem = LinearProblem::new(grid, coeffs, BoundaryCondition::Reflecting).with_integrator(integrator);
        let p0 = DensityField::from_fn(grid, 0.0, |x| (-4.0 * x * x).exp()).normalized();
        let traj = solve_ivp(&problem, &p0, 1.0, 64, &[]).unwrap();
        prop_assert!(traj.max_mass_drift < 1e-12);
    }

    #[test]
    fn implicit_euler_keeps_densities_nonnegative((a, b) in periodic_coeffs()) {
        let grid = Grid1D::new(40, -1.0, 1.0).unwrap();
        let coeffs = FpCoefficients::parse(&a, &b, Some(1.0)).unwrap();
        let problem = LinearProblem::new(grid, coeffs, BoundaryCondition::Absorbing)
            .with_integrator(Integrator::ImplicitEuler);
        let p0 = DensityField::from_fn(grid, 0.0, |x| if x.abs() < 0.1 { 5.0 } else { 0.0 });
        let traj = solve_ivp(&problem, &p0, 1.0, 64, &[]).unwrap();
        prop_assert!(traj.positivity_ok(), "min {}", traj.min_value);
    }

    #[test]
    fn period_map_columns_are_probabilities((a, b) in periodic_coeffs()) {
        let grid = Grid1D::new(24, -1.0, 1.0).unwrap();
        let coeffs = FpCoefficients::parse(&a, &b, Some(1.0)).unwrap();
        let problem = LinearProblem::new(grid, coeffs, BoundaryCondition::Reflecting)
            .with_integrator(Integrator::ImplicitEuler);
        let map = build_period_map(&problem, 1.0, 32).unwrap();
        for s in map.column_sums() {
            prop_assert!((s - 1.0).abs() < 1e-10, "column sum {}", s);
        }
        prop_assert!(map.min_entry() >= -1e-12);
    }

    #[test]
    fn reflected_paths_stay_in_the_box(b0 in -5.0f64..5.0, s in 0.1f64..3.0, seed in any::<u64>()) {
        let sys = SdeSystem::scalar(&format!("{b0} + sin(2*pi*t)"), &format!("{s}"), 1.0, -0.5, 0.5).unwrap();
        let batch = sample_laws(&sys, &InitialLaw::Point(vec![0.0]), 32, 3, 1.0 / 64.0, seed).unwrap();
        for law in &batch.snapshots {
            prop_assert!(law.points().all(|p| (-0.5..=0.5).contains(&p[0])));
            prop_assert!((law.mass() - 1.0).abs() < 1e-12);
        }
    }
}
