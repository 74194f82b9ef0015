use blochprop::oracle::{expm_reference, max_rel_error, OracleConfig};
use blochprop::propagator::propagator;
use blochprop::system::GammaMatrix;
use proptest::prelude::*;

fn field() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), -50.0..50.0f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn closed_form_matches_oracle(
        w in [field(), field(), field()],
        r in [0.0..20.0f64, 0.0..20.0f64, 0.0..20.0f64],
        t in 0.0..3.0f64,
    ) {
        let g = GammaMatrix::from_arrays(w, r).unwrap();
        let p = propagator(&g, t).unwrap();
        let reference = expm_reference(&(-g.m * t), &OracleConfig::default()).unwrap();
        prop_assert!(max_rel_error(&p.m, &reference) < 1e-9);
    }

    #[test]
    fn equal_transverse_rates_commute_with_rotation(
        w3 in -50.0..50.0f64,
        r12 in 0.0..20.0f64,
        r3 in 0.0..20.0f64,
        t in 0.0..3.0f64,
    ) {
        let g = GammaMatrix::from_arrays([0.0, 0.0, w3], [r12, r12, r3]).unwrap();
        let m = propagator(&g, t).unwrap().m;
        let e = (-r12 * t).exp();
        let (s, c) = (w3 * t).sin_cos();
        prop_assert!((m[(0, 0)] - e * c).abs() < 1e-12);
        prop_assert!((m[(1, 1)] - e * c).abs() < 1e-12);
        prop_assert!((m[(0, 1)] - e * s).abs() < 1e-12 || (m[(0, 1)] + e * s).abs() < 1e-12);
        prop_assert!((m[(2, 2)] - (-r3 * t).exp()).abs() < 1e-14);
    }
}
