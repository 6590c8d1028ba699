mod common;

use matsol_core::matrix::{mat_mul, numerical_rank, Complex, ComplexMatrix};
use matsol_core::presets::Preset;
use matsol_core::spectral::{
    build_operator_data, canonical_factorization, regauge_factorization, validate_scenario,
    ValidationIssue,
};
use proptest::prelude::*;

fn anticommutator_of(od: &matsol_core::OperatorData) -> ComplexMatrix {
    mat_mul(&od.a, &od.b).unwrap().add(&mat_mul(&od.b, &od.a).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn operators_match_block_formulas(seed in any::<u64>()) {
        let sc = common::random_scenario(&mut common::rng(seed));
        let od = build_operator_data(&sc).unwrap();
        let (d, n) = (sc.d, sc.n());
        let w = sc.effective_weights();
        for m in 0..n {
            for q in 0..n {
                let coeff = Complex::new(0.0, 1.0) / (sc.entries[m].k + sc.entries[q].k);
                for h in 0..d {
                    for l in 0..d {
                        let a = od.a[(m * d + h, q * d + l)];
                        let expect_a = if m == q && h == l { sc.entries[m].k } else { Complex::new(0.0, 0.0) };
                        prop_assert_eq!(a, expect_a);
                        let b = od.b[(m * d + h, q * d + l)];
                        prop_assert!((b - coeff * w[q][(h, l)]).norm() <= 1e-15 * (1.0 + b.norm()));
                    }
                }
            }
        }
    }

    #[test]
    fn factorization_reproduces_anticommutator(seed in any::<u64>()) {
        let sc = common::random_scenario(&mut common::rng(seed));
        let od = build_operator_data(&sc).unwrap();
        let ab = anticommutator_of(&od);
        let f = canonical_factorization(&od).unwrap();
        prop_assert!(f.dyad_sum().sub(&ab).unwrap().norm_sup() <= 1e-13 * ab.norm_sup().max(1.0));
        prop_assert!(numerical_rank(&ab, 1e-10) <= sc.d);
        prop_assert!(f.covector_rank <= sc.d);
    }

    #[test]
    fn regauge_preserves_dyad_sum(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let sc = common::random_scenario(&mut rng);
        let od = build_operator_data(&sc).unwrap();
        let t = common::random_matrix(&mut rng, sc.d, 1.0);
        prop_assume!(matsol_core::matrix::det(&t).unwrap().norm() > 0.05);
        let g = regauge_factorization(&od.fact, &t).unwrap();
        let s0 = od.fact.dyad_sum();
        prop_assert!(g.dyad_sum().sub(&s0).unwrap().norm_sup() <= 1e-12 * s0.norm_sup().max(1.0) / 0.05);
    }
}

#[test]
fn fig3_blocks_are_scaled_ones() {
    let od = build_operator_data(&Preset::Fig3.scenario()).unwrap();
    let k = [1.0, 2.0];
    for m in 0..2 {
        for q in 0..2 {
            let expect = Complex::new(0.0, 1.0) / (k[m] + k[q]) * Complex::new(0.0, 1.0);
            for h in 0..3 {
                for l in 0..3 {
                    assert_eq!(od.b[(3 * m + h, 3 * q + l)], expect);
                }
            }
        }
    }
}

#[test]
fn rank_deficient_weights_warn_but_assemble() {
    let od = build_operator_data(&Preset::Fig2.scenario()).unwrap();
    assert!(od
        .warnings
        .iter()
        .any(|w| matches!(w, ValidationIssue::DependentCovectors { .. })));
    assert!(od.fact.covector_rank < 3);
}

#[test]
fn negative_eigenvalue_reports_message() {
    let mut sc = Preset::Scalar1.scenario();
    sc.entries[0].k = Complex::new(-1.0, 0.0);
    let err = validate_scenario(sc).unwrap_err();
    assert!(err.to_string().contains("eigenvalue real part must be positive"));
}
