use matsol_core::matrix::{
    anticommutator, commutator, det, expm, expm_pade, mat_mul, Complex, ComplexMatrix, Lu,
};
use proptest::prelude::*;

fn matrix(n: usize, scale: f64) -> impl Strategy<Value = ComplexMatrix> {
    prop::collection::vec((-scale..scale, -scale..scale), n * n).prop_map(move |v| {
        ComplexMatrix::from_vec(n, n, v.into_iter().map(|(re, im)| Complex::new(re, im)).collect())
            .unwrap()
    })
}

fn sized(scale: f64) -> impl Strategy<Value = ComplexMatrix> {
    (1usize..=6).prop_flat_map(move |n| matrix(n, scale))
}

fn pair(scale: f64) -> impl Strategy<Value = (ComplexMatrix, ComplexMatrix)> {
    (1usize..=6).prop_flat_map(move |n| (matrix(n, scale), matrix(n, scale)))
}

fn dist(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.sub(b).unwrap().norm_sup()
}

proptest! {
    #[test]
    fn det_is_multiplicative((a, b) in pair(1.0)) {
        let lhs = det(&mat_mul(&a, &b).unwrap()).unwrap();
        let rhs = det(&a).unwrap() * det(&b).unwrap();
        let scale = a.norm_fro().powi(a.rows() as i32) * b.norm_fro().powi(b.rows() as i32);
        prop_assert!((lhs - rhs).norm() <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn expm_inverse(a in sized(1.5)) {
        let n = a.rows();
        let p = mat_mul(&expm(&a).unwrap(), &expm(&a.scale(Complex::new(-1.0, 0.0))).unwrap()).unwrap();
        prop_assert!(dist(&p, &ComplexMatrix::identity(n)) <= 1e-11);
    }

    #[test]
    fn expm_one_parameter_group(a in sized(1.0), x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let e = |s: f64| expm(&a.scale(Complex::new(s, 0.0))).unwrap();
        let lhs = e(x + y);
        let rhs = mat_mul(&e(x), &e(y)).unwrap();
        prop_assert!(dist(&lhs, &rhs) <= 1e-11 * lhs.norm_sup().max(1.0));
    }

    #[test]
    fn diagonal_expm_matches_pade(d in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..6)) {
        let diag: Vec<Complex> = d.iter().map(|&(r, i)| Complex::new(r, i)).collect();
        let a = ComplexMatrix::from_diagonal(&diag);
        let fast = expm(&a).unwrap();
        for (k, z) in diag.iter().enumerate() {
            prop_assert_eq!(fast[(k, k)], z.exp());
        }
        prop_assert!(dist(&fast, &expm_pade(&a).unwrap()) <= 1e-12 * fast.norm_sup());
    }

    #[test]
    fn lu_solve_residual((a, b) in pair(1.0)) {
        let lu = Lu::factor(&a).unwrap();
        prop_assume!(!lu.is_singular());
        let x = lu.solve(&b).unwrap();
        let r = mat_mul(&a, &x).unwrap().sub(&b).unwrap();
        prop_assert!(r.norm_inf() <= 1e-12 * a.norm_inf() * x.norm_inf().max(1.0) * a.rows() as f64);
    }

    #[test]
    fn anticommutator_symmetry((a, b) in pair(1.0)) {
        prop_assert_eq!(anticommutator(&a, &b).unwrap(), anticommutator(&b, &a).unwrap());
        let sum = anticommutator(&a, &b).unwrap().add(&commutator(&a, &b).unwrap()).unwrap();
        prop_assert!(dist(&sum, &mat_mul(&a, &b).unwrap().scale(Complex::new(2.0, 0.0))) <= 1e-14);
    }
}
