use std::f64::consts::PI;
use std::sync::Arc;

use klfield::pde_app::{h1_error, solve_with_coefficient, H1Target, StudyOptions};
use klfield::{
    assemble_sample_matrix, perturbation_study, solve_kl_eigen, FeSpace, FieldModel, GaussianSampleSet,
    LatticeRule,
};

fn kappa(x: f64) -> f64 {
    1.0 + x * x
}

fn exact(x: f64) -> f64 {
    (PI * x).sin()
}

fn exact_prime(x: f64) -> f64 {
    PI * (PI * x).cos()
}

/// `−(κ u′)′` for the manufactured pair above.
fn forcing(x: f64) -> f64 {
    -2.0 * x * PI * (PI * x).cos() + PI * PI * kappa(x) * (PI * x).sin()
}

fn manufactured_error(nel: usize, k: usize) -> f64 {
    let space = FeSpace::<f64>::new(nel, k).unwrap();
    let sol = solve_with_coefficient(&space, kappa, forcing, &[]).unwrap();
    assert!(sol.energy.holds);
    h1_error(
        &space,
        &sol.coeffs,
        H1Target::Function {
            value: &exact,
            derivative: &exact_prime,
        },
    )
    .unwrap()
}

#[test]
fn manufactured_solution_converges_at_order_k() {
    for k in 1..=3usize {
        let errs: Vec<f64> = [8usize, 16, 32].iter().map(|&n| manufactured_error(n, k)).collect();
        for pair in errs.windows(2) {
            let rate = (pair[0] / pair[1]).log2();
            assert!(
                (rate - k as f64).abs() <= 0.2 * k as f64,
                "k={k}: observed rate {rate:.3} from {errs:?}"
            );
        }
    }
}

#[test]
fn boundary_values_are_zero() {
    let space = FeSpace::<f64>::new(5, 3).unwrap();
    let sol = solve_with_coefficient(&space, kappa, forcing, &[]).unwrap();
    assert_eq!(sol.coeffs[0], 0.0);
    assert_eq!(*sol.coeffs.last().unwrap(), 0.0);
}

#[test]
fn nonpositive_coefficient_is_rejected() {
    let space = FeSpace::<f64>::new(4, 1).unwrap();
    assert!(solve_with_coefficient(&space, |x| x - 0.5, |_| 1.0, &[]).is_err());
}

#[test]
fn perturbation_error_falls_with_m_on_example1() {
    let model = FieldModel::example1();
    let space = FeSpace::<f64>::new(16, 2).unwrap();
    let build = LatticeRule::with_seeded_shift(vec![1], 257, 1).unwrap();
    let g = assemble_sample_matrix(&space, &model, &GaussianSampleSet::from_rule(&build).unwrap()).unwrap();
    let kl = solve_kl_eigen(&space, &model, &g, 8).unwrap();
    let eval = GaussianSampleSet::from_rule(&LatticeRule::with_seeded_shift(vec![1], 64, 2).unwrap()).unwrap();
    let report = perturbation_study(&kl, &[2, 4, 8], Arc::new(|_| 1.0), &eval, &StudyOptions::default()).unwrap();
    assert_eq!(report.energy_violations, 0);
    let errs: Vec<f64> = report.rows.iter().map(|r| r.error_estimate).collect();
    assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
    for row in &report.rows {
        assert!(row.lhs <= row.rhs * (1.0 + 1e-10), "bound violated at M = {}", row.m);
    }
}
