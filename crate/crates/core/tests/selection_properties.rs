mod common;

use proptest::prelude::*;

#[test]
fn candidate_selection_matches_brute_force() {
    let fallbacks = common::check_candidate_selection(50).unwrap();
    assert_eq!(fallbacks, 10);
}

#[test]
fn broad_kernel_prefers_broad_peak() {
    let (dirac, gauss) = common::check_two_bumps().unwrap();
    assert!(dirac < 0.3 && gauss > 0.3);
}

#[test]
fn global_error_is_reflection_symmetric() {
    let worst = common::check_reflection_symmetry(100).unwrap();
    assert!(worst <= 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn folds_stay_ordered(seed in any::<u64>(), queries in prop::collection::vec(-6.0f64..6.0, 1000)) {
        let (cdf, _) = common::synthetic_cdf(seed);
        for y in queries {
            let f = cdf.eval(y);
            prop_assert!(f.plus >= f.mid && f.mid >= f.minus, "{y}: {f:?}");
        }
    }
}
