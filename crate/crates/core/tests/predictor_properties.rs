use phi4::predictor::{chi_prediction, y_moment_closed, Direction, PredictionParams, YDistribution};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn radial_moments_match_closed_form(n in 1usize..=4, p in 0u32..=4) {
        let q = YDistribution::new(n).unwrap().moment(p, Direction::Radial).unwrap();
        prop_assert!((q / y_moment_closed(n, p) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mgf_is_even_convex_and_at_least_one(n in 1usize..=4, a in 0.0..3.0_f64) {
        let y = YDistribution::new(n).unwrap();
        let m = y.mgf(a).unwrap();
        prop_assert!(m >= 1.0 - 1e-12);
        prop_assert!((y.mgf(-a).unwrap() - m).abs() < 1e-10 * m);
        let h = 0.05;
        let second = y.mgf(a + h).unwrap() - 2.0 * m + y.mgf((a - h).abs()).unwrap();
        prop_assert!(second > -1e-9);
    }

    #[test]
    fn chi_zero_grows_with_the_square_root_of_the_volume_above_four_dimensions(
        g in 0.001..0.5_f64, n in 1usize..=4, scales in 1usize..=5
    ) {
        let at = |n_scales| {
            let p = PredictionParams { d: 5, eta: 0.0, n, g, l: 2, n_scales };
            chi_prediction(&p, &p.constants().unwrap(), &[0; 5]).unwrap()
        };
        prop_assert!((at(scales + 1) / at(scales) - 2f64.powf(2.5)).abs() < 1e-9);
    }
}

#[test]
fn component_binder_ratio_rises_towards_the_gaussian_value() {
    let mut previous = 2.0;
    for n in 1..=4 {
        let b = YDistribution::new(n).unwrap().binder_ratio().unwrap();
        assert!(b > previous && b < 3.0, "n = {n}: {b}");
        previous = b;
    }
    // |Y|^4 is exponential at n = 2, and a component carries 3n/(n+2) of the radial ratio.
    let b2 = YDistribution::new(2).unwrap().binder_ratio().unwrap();
    assert!((b2 - 0.75 * std::f64::consts::PI).abs() < 1e-9, "{b2}");
}
