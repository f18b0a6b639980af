mod common;

use common::{energy_test, mann_whitney_greater, mann_whitney_u, mean_se};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use svgrad::rng::standard_normal;

#[test]
fn mann_whitney_exact_tails() {
    // Complete separation of 5 vs 5: one split out of C(10, 5) = 252.
    let hi = [6.0, 7.0, 8.0, 9.0, 10.0];
    let lo = [1.0, 2.0, 3.0, 4.0, 5.0];
    assert_eq!(mann_whitney_u(&hi, &lo), 25.0);
    assert!((mann_whitney_greater(&hi, &lo) - 1.0 / 252.0).abs() < 1e-15);
    assert_eq!(mann_whitney_greater(&lo, &hi), 1.0);
    // One swap: U = 24, two splits reach it.
    let hi = [5.0, 7.0, 8.0, 9.0, 10.0];
    let lo = [1.0, 2.0, 3.0, 4.0, 6.0];
    assert!((mann_whitney_greater(&hi, &lo) - 2.0 / 252.0).abs() < 1e-15);
    // Identical samples: every split ties the observed U.
    assert_eq!(mann_whitney_greater(&[1.0, 1.0], &[1.0, 1.0]), 1.0);
}

#[test]
fn mean_and_standard_error() {
    let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(m, 2.5);
    let sd = (5.0f64 / 3.0).sqrt();
    assert!((se - sd / 2.0).abs() < 1e-12);
}

#[test]
fn energy_test_separates_shifted_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<_> = (0..60).map(|_| standard_normal(&mut rng, 2)).collect();
    let y: Vec<_> = (0..60).map(|_| standard_normal(&mut rng, 2)).collect();
    let shifted: Vec<_> = y.iter().map(|v| v.add_scalar(1.0)).collect();
    assert!(energy_test(&x, &y, 200, &mut rng) > 0.01);
    assert!(energy_test(&x, &shifted, 200, &mut rng) < 0.01);
}
