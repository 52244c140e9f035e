//! Cross-checks of the closed-form radial moments against the independent
//! quadrature oracle, plus frozen reference values and the identities the
//! normalization constants must satisfy.

use approx::assert_relative_eq;
use ellmix::{
    j_moment, j_moment_oracle, norm_constant, sigma_star_factor, sigma_tilde_sq, ConstantMode,
    JTable,
};
use proptest::prelude::*;

#[test]
fn closed_form_matches_the_oracle_on_a_grid() {
    for &alpha in &[0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 0.8, 1.0] {
        for q in 0..=10 {
            let cf = j_moment(q, alpha).unwrap();
            let or = j_moment_oracle(q, alpha).unwrap();
            assert_relative_eq!(cf, or, max_relative = 1e-9);
        }
    }
}

/// Values frozen from the quadrature oracle; the closed form must keep
/// reproducing them exactly (to rounding).
#[test]
fn frozen_reference_values() {
    assert_relative_eq!(
        j_moment(3, 0.02).unwrap(),
        5.01927245712111628e-2,
        max_relative = 1e-14
    );
    assert_relative_eq!(
        j_moment(5, 0.02).unwrap(),
        5.03332160727476829e-2,
        max_relative = 1e-14
    );
    assert_relative_eq!(
        sigma_star_factor(2, 0.01).unwrap(),
        1.00029999999999997,
        max_relative = 1e-14
    );
    assert_relative_eq!(
        sigma_star_factor(3, 0.01).unwrap(),
        1.00049998000199980,
        max_relative = 1e-14
    );
    assert_relative_eq!(
        sigma_star_factor(3, 0.1).unwrap(),
        1.04980198019801962,
        max_relative = 1e-14
    );
    assert_relative_eq!(
        sigma_tilde_sq(2, 0.01).unwrap(),
        9.99600119965249334e-5,
        max_relative = 1e-13
    );
    assert_relative_eq!(
        sigma_tilde_sq(3, 0.01).unwrap(),
        9.99300429758154252e-5,
        max_relative = 1e-13
    );
    assert_relative_eq!(
        sigma_tilde_sq(3, 0.1).unwrap(),
        9.34071526552826548e-3,
        max_relative = 1e-13
    );
    assert_relative_eq!(
        norm_constant(2, 1.0, 0.01, ConstantMode::Exact).unwrap().value,
        6.34936359342409684,
        max_relative = 1e-14
    );
    assert_relative_eq!(
        norm_constant(3, 1.0, 0.01, ConstantMode::Exact).unwrap().value,
        3.17436436027602076,
        max_relative = 1e-14
    );
}

/// Integrating the density over all space must give 1, which reduces to
/// C_d * S_{d-1} * sqrt(det) * J_{d-1} = 1 with S_{d-1} the unit sphere
/// area (2, 2 pi, 4 pi).
#[test]
fn exact_constants_normalize_the_density() {
    let surface = [2.0, std::f64::consts::TAU, 4.0 * std::f64::consts::PI];
    for (d, s) in (1..=3).zip(surface) {
        for &sigma in &[0.005, 0.01, 0.05, 0.099] {
            for &det in &[1e-6, 1.0, 2.5e7] {
                let c = norm_constant(d, det, sigma, ConstantMode::Exact)
                    .unwrap()
                    .value;
                let j = j_moment(d - 1, sigma).unwrap();
                assert_relative_eq!(c * s * det.sqrt() * j, 1.0, max_relative = 1e-12);
            }
        }
    }
}

/// The closed-form small-spread approximation agrees with the exact
/// constant when the spread is small and visibly departs once it is not.
#[test]
fn approximate_constants_converge_to_exact() {
    for d in 1..=3 {
        let exact = norm_constant(d, 1.0, 0.01, ConstantMode::Exact).unwrap().value;
        let approx = norm_constant(d, 1.0, 0.01, ConstantMode::Approx)
            .unwrap()
            .value;
        assert_relative_eq!(exact, approx, max_relative = 1e-10);
    }
    let exact = norm_constant(3, 1.0, 0.5, ConstantMode::Exact).unwrap().value;
    let approx = norm_constant(3, 1.0, 0.5, ConstantMode::Approx).unwrap().value;
    assert!(
        (exact - approx).abs() / exact > 1e-3,
        "large spread should separate the two constants"
    );
}

/// In the regime where exp(-1/(2 sigma^2)) underflows, the spread
/// shrinkage has an exact rational form in sigma^2.
#[test]
fn spread_shrinkage_matches_the_rational_form_at_small_sigma() {
    for &sigma in &[0.005, 0.01, 0.02, 0.05, 0.1] {
        let s2 = sigma * sigma;
        let expected = s2 * (1.0 + 3.0 * s2 * s2)
            / (1.0 + 7.0 * s2 + 9.0 * s2 * s2 + 3.0 * s2 * s2 * s2);
        assert_relative_eq!(
            sigma_tilde_sq(3, sigma).unwrap(),
            expected,
            max_relative = 1e-12
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// The table and the single-moment entry point agree bitwise.
    #[test]
    fn table_matches_single_moments(alpha in 1e-3..1.0f64, q_max in 0usize..10) {
        let table = JTable::new(alpha, q_max).unwrap();
        for q in 0..=q_max {
            prop_assert_eq!(table.value(q), j_moment(q, alpha).unwrap());
        }
    }

    /// The three-term recurrence holds along the whole table.
    #[test]
    fn recurrence_holds(alpha in 1e-3..1.0f64) {
        let table = JTable::new(alpha, 10).unwrap();
        for q in 2..=10 {
            let lhs = table.value(q);
            let rhs = table.value(q - 1)
                + (q as f64 - 1.0) * alpha * alpha * table.value(q - 2);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs);
        }
    }

    /// The constant scales as det^{-1/2}.
    #[test]
    fn constant_det_scaling(det in 1e-8..1e8f64, sigma in 1e-3..0.0999f64) {
        let c1 = norm_constant(3, 1.0, sigma, ConstantMode::Exact).unwrap().value;
        let cd = norm_constant(3, det, sigma, ConstantMode::Exact).unwrap().value;
        prop_assert!((cd * det.sqrt() - c1).abs() <= 1e-12 * c1);
    }

    /// Oracle agreement on random points of the domain.
    #[test]
    fn oracle_agreement_random(alpha in 0.01..1.0f64, q in 0usize..9) {
        let cf = j_moment(q, alpha).unwrap();
        let or = j_moment_oracle(q, alpha).unwrap();
        prop_assert!((cf - or).abs() <= 1e-8 * or.abs());
    }
}
