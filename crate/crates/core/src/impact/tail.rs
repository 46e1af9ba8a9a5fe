//! Discrete power-law tail fits: `P(n) ∝ n^-alpha` for `n >= n_min`.

use super::ImpactError;
use serde::{Deserialize, Serialize};

/// Minimum tail size for a candidate `n_min`.
pub const MIN_TAIL_SAMPLES: usize = 100;

const ALPHA_RANGE: (f64, f64) = (1.0 + 1e-6, 8.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub exponent: f64,
    /// Asymptotic standard error `(alpha - 1) / sqrt(n_tail)`.
    pub exponent_se: f64,
    pub x_min: u64,
    pub n_tail: usize,
    pub ks: f64,
}

// B_{2j} / (2j)!
const BERNOULLI_OVER_FACT: [f64; 6] = [
    1.0 / 12.0,
    -1.0 / 720.0,
    1.0 / 30240.0,
    -1.0 / 1209600.0,
    1.0 / 47900160.0,
    -691.0 / 1307674368000.0,
];

/// Hurwitz zeta `sum_{k >= 0} (k + q)^-s` for `s > 1`, `q > 0`.
pub fn hurwitz_zeta(s: f64, q: f64) -> f64 {
    const M: usize = 12;
    let mut sum = 0.0;
    for k in 0..M {
        sum += (q + k as f64).powf(-s);
    }
    let a = q + M as f64;
    sum += a.powf(1.0 - s) / (s - 1.0) + 0.5 * a.powf(-s);
    // rising factorial s (s+1) ... (s+2j-2) times a^(-s-2j+1)
    let mut fac = s;
    let mut pow = a.powf(-s - 1.0);
    for (j, b) in BERNOULLI_OVER_FACT.iter().enumerate() {
        sum += b * fac * pow;
        let m = 2.0 * j as f64;
        fac *= (s + m + 1.0) * (s + m + 2.0);
        pow /= a * a;
    }
    sum
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..100 {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
        if hi - lo < 1e-9 {
            break;
        }
    }
    (lo + hi) / 2.0
}

/// MLE exponent for the (sorted, all `>= x_min`) tail.
fn mle(tail: &[u64], x_min: u64) -> f64 {
    let n = tail.len() as f64;
    let sum_ln: f64 = tail.iter().map(|&x| (x as f64).ln()).sum();
    let q = x_min as f64;
    golden_max(
        |a| -n * hurwitz_zeta(a, q).ln() - a * sum_ln,
        ALPHA_RANGE.0,
        ALPHA_RANGE.1,
    )
}

/// KS distance between the empirical tail CDF and the fitted model.
fn ks_distance(tail: &[u64], x_min: u64, alpha: f64) -> f64 {
    let n = tail.len() as f64;
    let z0 = hurwitz_zeta(alpha, x_min as f64);
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < tail.len() {
        let x = tail[i];
        let mut j = i;
        while j < tail.len() && tail[j] == x {
            j += 1;
        }
        let model_below = 1.0 - hurwitz_zeta(alpha, x as f64) / z0;
        let model_upto = 1.0 - hurwitz_zeta(alpha, x as f64 + 1.0) / z0;
        d = d
            .max((i as f64 / n - model_below).abs())
            .max((j as f64 / n - model_upto).abs());
        i = j;
    }
    d
}

/// Maximum-likelihood discrete power-law exponent with `x_min` chosen by
/// minimum Kolmogorov-Smirnov distance over candidates leaving at least
/// [`MIN_TAIL_SAMPLES`] samples in the tail.
pub fn fit_tail_exponent(samples: &[u64]) -> Result<TailFit, ImpactError> {
    let mut xs: Vec<u64> = samples.iter().copied().filter(|&x| x > 0).collect();
    xs.sort_unstable();
    let mut best: Option<TailFit> = None;
    let mut start = 0;
    while start < xs.len() {
        let x_min = xs[start];
        let tail = &xs[start..];
        if tail.len() < MIN_TAIL_SAMPLES {
            break;
        }
        // an exponent is unidentifiable from a single value
        if tail[tail.len() - 1] == x_min {
            break;
        }
        let alpha = mle(tail, x_min);
        let ks = ks_distance(tail, x_min, alpha);
        if best.as_ref().is_none_or(|b| ks < b.ks) {
            best = Some(TailFit {
                exponent: alpha,
                exponent_se: (alpha - 1.0) / (tail.len() as f64).sqrt(),
                x_min,
                n_tail: tail.len(),
                ks,
            });
        }
        while start < xs.len() && xs[start] == x_min {
            start += 1;
        }
    }
    best.ok_or(ImpactError::TooFewTailSamples {
        samples: xs.len(),
        required: MIN_TAIL_SAMPLES,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Zeta};

    #[test]
    fn zeta_reference_values() {
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((hurwitz_zeta(2.0, 1.0) - pi2_6).abs() < 1e-13);
        assert!((hurwitz_zeta(2.0, 2.0) - (pi2_6 - 1.0)).abs() < 1e-13);
        // zeta(3) (Apery)
        assert!((hurwitz_zeta(3.0, 1.0) - 1.202_056_903_159_594_2).abs() < 1e-13);
        // brute-force partial sum plus integral tail
        let s = 1.5;
        let brute: f64 = (0..2_000_000).map(|k| (k as f64 + 7.25).powf(-s)).sum::<f64>()
            + (2_000_000f64 + 7.25).powf(1.0 - s) / (s - 1.0);
        assert!((hurwitz_zeta(s, 7.25) / brute - 1.0).abs() < 1e-9);
    }

    #[test]
    fn recovers_zipf_two() {
        // rand_distr's Zeta sampler is an independent generator for P(n) ∝ n^-a
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dist = Zeta::new(2.0).unwrap();
        let xs: Vec<u64> = (0..100_000).map(|_| dist.sample(&mut rng) as u64).collect();
        let f = fit_tail_exponent(&xs).unwrap();
        assert!((f.exponent - 2.0).abs() < 0.03, "{f:?}");
    }

    #[test]
    fn degenerate_samples() {
        assert!(matches!(
            fit_tail_exponent(&[5; 1000]),
            Err(ImpactError::TooFewTailSamples { .. })
        ));
        assert!(matches!(
            fit_tail_exponent(&[1, 2, 3]),
            Err(ImpactError::TooFewTailSamples { .. })
        ));
    }
}
