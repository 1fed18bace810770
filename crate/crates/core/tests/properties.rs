use klfield::field_models::Expr;
use klfield::lattice_qmc::{inverse_normal_cdf, normal_cdf};
use klfield::{balance_parameters, decay_fit, FeSpace, LatticeRule, SampleMatrix};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inverse_normal_inverts_cdf(u in 1e-12f64..0.999_999) {
        let t = inverse_normal_cdf(u).unwrap();
        let back = normal_cdf(t);
        prop_assert!((back - u).abs() <= 1e-13 * u.max(1e-3), "u={} back={}", u, back);
    }

    #[test]
    fn inverse_normal_is_monotone(a in 1e-9f64..1.0, b in 1e-9f64..1.0) {
        prop_assume!(a < b && b < 1.0);
        prop_assert!(inverse_normal_cdf(a).unwrap() <= inverse_normal_cdf(b).unwrap());
    }

    #[test]
    fn inverse_normal_is_odd(u in 1e-6f64..0.5) {
        let lo = inverse_normal_cdf(u).unwrap();
        let hi = inverse_normal_cdf(1.0 - u).unwrap();
        prop_assert!((lo + hi).abs() <= 1e-12 * lo.abs().max(1.0));
    }

    #[test]
    fn lattice_points_lie_in_unit_cube(n in 2u64..500, z2 in 1u64..500, seed in any::<u64>()) {
        let z2 = z2 % n;
        prop_assume!(z2 > 0 && gcd(z2, n) == 1);
        let rule = LatticeRule::<f64>::with_seeded_shift(vec![1, z2], n, seed).unwrap();
        let pts = rule.shifted_points();
        prop_assert_eq!(pts.len() as u64, n);
        for row in pts.rows() {
            for &v in row {
                prop_assert!((0.0..1.0).contains(&v));
            }
        }
    }

    #[test]
    fn basis_is_a_partition_of_unity(nel in 1usize..20, k in 1usize..=10, x in 0.0f64..=1.0) {
        let space = FeSpace::<f64>::new(nel, k).unwrap();
        let ones = vec![1.0; space.ndofs()];
        prop_assert!((space.eval_fe(&ones, x).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!(space.eval_fe_derivative(&ones, x).unwrap().abs() < 1e-8);
    }

    #[test]
    fn mass_matrix_integrates_products(nel in 1usize..16, k in 1usize..=6) {
        let space = FeSpace::<f64>::new(nel, k).unwrap();
        let mass = space.mass_matrix();
        let ones = vec![1.0; space.ndofs()];
        let total: f64 = mass.matvec(&ones).iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        // the coefficients of x interpolate it exactly for k ≥ 1
        let xs: Vec<f64> = (0..space.ndofs()).map(|i| space.dof_coordinate(i)).collect();
        let xx: f64 = xs.iter().zip(mass.matvec(&xs)).map(|(a, b)| a * b).sum();
        prop_assert!((xx - 1.0 / 3.0).abs() < 1e-12);
        prop_assert!(mass.cholesky().is_ok());
    }

    #[test]
    fn decay_fit_recovers_power_laws(c in 0.1f64..10.0, a in 0.5f64..8.0) {
        let eigs: Vec<f64> = (1..=12).map(|n| c * (n as f64).powf(-a)).collect();
        let fit = decay_fit(&eigs, 2, 10).unwrap();
        prop_assert!((fit.slope + a).abs() < 1e-10);
        prop_assert!((fit.intercept - c.ln()).abs() < 1e-9);
    }

    #[test]
    fn balance_grows_as_epsilon_shrinks(e1 in 0.01f64..1.0, e2 in 0.01f64..1.0, s in 0.5f64..4.0) {
        prop_assume!(e1 < e2);
        let fine = balance_parameters(e1, s, 1).unwrap();
        let coarse = balance_parameters(e2, s, 1).unwrap();
        prop_assert!(fine.n >= coarse.n && fine.m >= coarse.m && fine.h <= coarse.h);
    }

    #[test]
    fn sample_matrix_dump_round_trips(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
        let columns: Vec<Vec<f64>> = (0..cols)
            .map(|c| (0..rows).map(|r| ((seed ^ (r * 31 + c) as u64) % 1000) as f64 / 7.0 - 50.0).collect())
            .collect();
        let g = SampleMatrix::from_columns(rows, columns);
        let mut buf = Vec::new();
        g.write_binary(&mut buf).unwrap();
        prop_assert_eq!(buf.len(), 20 + 8 * rows * cols);
        prop_assert_eq!(SampleMatrix::<f64>::read_binary(&buf[..]).unwrap(), g);
    }

    #[test]
    fn expression_display_reparses(a in -5.0f64..5.0, b in 0.1f64..3.0, x in 0.0f64..1.0, y in -2.0f64..2.0) {
        let src = format!("exp(-abs(x - {b}) * norm1(y)) + {a} * y1 ^ 2 / (1 + x)");
        let e = Expr::parse(&src, 1).unwrap();
        let again = Expr::parse(&e.to_string(), 1).unwrap();
        let v1 = e.eval(&[y], x);
        let v2 = again.eval(&[y], x);
        prop_assert!((v1 - v2).abs() <= 1e-12 * v1.abs().max(1.0));
        let direct = (-(x - b).abs() * y.abs()).exp() + a * y * y / (1.0 + x);
        prop_assert!((v1 - direct).abs() <= 1e-12 * direct.abs().max(1.0));
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}
