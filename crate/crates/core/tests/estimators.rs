//! Calibration of the shared fitters against synthetic data with known answers.

use dsqrt_core::impact::{fit_power_curve, fit_tail_exponent, Point};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Zeta};

/// Binned means of `y = x^0.5` with 20% multiplicative noise; the fitted
/// exponent should fall within 2 SE of the truth about as often as a
/// Gaussian interval promises.
#[test]
fn power_fit_error_bars_cover_the_truth() {
    let reps = 1000;
    let per_bin = 200;
    let noise = Normal::new(0.0, 0.2).unwrap();
    let mut covered = 0;
    for rep in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(rep);
        let points: Vec<Point> = (0..10)
            .map(|k| {
                let x = 1e-4 * 10f64.powf(k as f64 / 3.0);
                let ys: Vec<f64> = (0..per_bin).map(|_| x.sqrt() * (1.0 + noise.sample(&mut rng))).collect();
                let m = ys.iter().sum::<f64>() / per_bin as f64;
                let var = ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (per_bin - 1) as f64;
                Point { x, y: m, se: (var / per_bin as f64).sqrt() }
            })
            .collect();
        let f = fit_power_curve(&points).unwrap();
        if (f.exponent - 0.5).abs() <= 2.0 * f.exponent_se() {
            covered += 1;
        }
    }
    println!("2-SE coverage {covered}/{reps}");
    assert!(covered * 100 >= 95 * reps, "{covered}/{reps}");
}

#[test]
fn tail_fit_recovers_zeta_exponents() {
    for (seed, mu) in [(1u64, 1.6f64), (2, 2.0), (3, 2.4)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = Zeta::new(mu).unwrap();
        let draws: Vec<u64> = (0..50_000).map(|_| z.sample(&mut rng) as u64).collect();
        let f = fit_tail_exponent(&draws).unwrap();
        assert!((f.exponent - mu).abs() < 4.0 * f.exponent_se + 0.01, "{mu}: {f:?}");
    }
}
