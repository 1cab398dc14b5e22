use phi4::montecarlo::{estimate, jackknife, mode_from_k, mode_function};
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sine_modes_are_orthonormal(d in 1usize..=3, side in prop::sample::select(vec![4usize, 6, 8]), a in prop::collection::vec(0u32..3, 3), b in prop::collection::vec(0u32..3, 3)) {
        let half = (side / 2) as u32;
        let a: Vec<u32> = a[..d].iter().map(|v| v % half).collect();
        let b: Vec<u32> = b[..d].iter().map(|v| v % half).collect();
        let (a, b) = (&a[..], &b[..]);
        let ea = mode_function(d, side, a).unwrap();
        let eb = mode_function(d, side, b).unwrap();
        let volume = ea.len() as f64;
        let dot: f64 = ea.iter().zip(&eb).map(|(x, y)| x * y).sum::<f64>() / volume;
        prop_assert!((dot - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12, "{a:?} {b:?}: {dot}");
    }

    #[test]
    fn modes_round_trip_through_momenta(m in prop::collection::vec(0u32..4, 4), side in prop::sample::select(vec![8usize, 16])) {
        let k: Vec<f64> = m.iter().map(|&v| 2.0 * std::f64::consts::PI * v as f64).collect();
        prop_assert_eq!(mode_from_k(&k, side).unwrap(), m);
    }

    #[test]
    fn jackknife_of_a_linear_function_is_the_naive_error(seed in 0u64..1000, blocks in 10usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = blocks * 20;
        let x: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
        let (value, err) = jackknife(&[&x], blocks, |m| 3.0 * m[0]).unwrap();
        let mean = x.iter().sum::<f64>() / len as f64;
        prop_assert!((value - 3.0 * mean).abs() < 1e-12);
        let block_means: Vec<f64> = x.chunks(20).map(|c| c.iter().sum::<f64>() / 20.0).collect();
        let var = block_means.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / ((blocks - 1) * blocks) as f64;
        prop_assert!((err - 3.0 * var.sqrt()).abs() < 1e-10);
    }
}

#[test]
fn independent_samples_have_unit_autocorrelation_time() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>()).collect();
    let e = estimate(&x).unwrap();
    assert!((e.tau_int - 0.5).abs() < 0.05, "{}", e.tau_int);
    assert!((e.mean - 0.5).abs() < 4.0 * e.error);
}
