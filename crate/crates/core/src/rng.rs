//! Reproducible random streams and count samplers.
//!
//! Every random quantity is drawn from a ChaCha8 stream keyed by the user
//! seed and positioned by a path of indices (replicate, sub-task, ...). Two
//! runs with the same seed produce the same draws whatever the thread count
//! or scheduling order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for `path` under `seed`.
pub fn substream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let stream = path
        .iter()
        .fold(0x6A09_E667_F3BC_C909u64, |h, &p| splitmix64(h ^ splitmix64(p)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn sample_poisson<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> u64 {
    if mu <= 0.0 || !mu.is_finite() {
        return 0;
    }
    Poisson::new(mu).expect("positive finite rate").sample(rng) as u64
}

/// Negative binomial draw with mean `mu` and `Var = mu + mu^2/kappa`, as a
/// Poisson count with Gamma(kappa, mu/kappa) distributed rate. An infinite
/// `kappa` gives a Poisson draw.
pub fn sample_nb<R: Rng + ?Sized>(mu: f64, kappa: f64, rng: &mut R) -> u64 {
    if mu <= 0.0 || !mu.is_finite() {
        return 0;
    }
    if !kappa.is_finite() {
        return sample_poisson(mu, rng);
    }
    let lambda = Gamma::new(kappa, mu / kappa)
        .expect("positive shape and scale")
        .sample(rng);
    sample_poisson(lambda, rng)
}

/// Over-dispersed Poisson draw `round(phi * Poisson(mu / phi))`, with mean
/// `mu` and variance close to `phi * mu`.
pub fn sample_odp<R: Rng + ?Sized>(mu: f64, phi: f64, rng: &mut R) -> u64 {
    if !(phi > 0.0) {
        return mu.max(0.0).round() as u64;
    }
    (phi * sample_poisson(mu / phi, rng) as f64).round() as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(draws: &[u64]) -> (f64, f64) {
        let n = draws.len() as f64;
        let mean = draws.iter().map(|&d| d as f64).sum::<f64>() / n;
        let var = draws.iter().map(|&d| (d as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| substream(7, &[3]).random()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let b: u64 = substream(7, &[4]).random();
        let c: u64 = substream(8, &[3]).random();
        assert_ne!(a[0], b);
        assert_ne!(a[0], c);
        let d: u64 = substream(7, &[3, 0]).random();
        assert_ne!(a[0], d);
    }

    #[test]
    fn nb_variance() {
        let mut rng = substream(1, &[0]);
        let draws: Vec<u64> = (0..1_000_000).map(|_| sample_nb(10.0, 2.0, &mut rng)).collect();
        let (mean, var) = moments(&draws);
        assert!((mean - 10.0).abs() < 0.05, "{mean}");
        assert!((var / 60.0 - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn poisson_limit_variance() {
        let mut rng = substream(2, &[0]);
        let draws: Vec<u64> = (0..1_000_000)
            .map(|_| sample_nb(5.0, f64::INFINITY, &mut rng))
            .collect();
        let (mean, var) = moments(&draws);
        assert!((var / mean - 1.0).abs() < 0.01, "{mean} {var}");
        let mut rng = substream(2, &[1]);
        let capped: Vec<u64> = (0..1_000_000).map(|_| sample_nb(5.0, 1e8, &mut rng)).collect();
        let (mean, var) = moments(&capped);
        assert!((var / mean - 1.0).abs() < 0.01, "{mean} {var}");
    }

    #[test]
    fn odp_variance() {
        let mut rng = substream(3, &[0]);
        let draws: Vec<u64> = (0..200_000).map(|_| sample_odp(400.0, 4.0, &mut rng)).collect();
        let (mean, var) = moments(&draws);
        assert!((mean - 400.0).abs() < 1.0, "{mean}");
        assert!((var / mean / 4.0 - 1.0).abs() < 0.03, "{var}");
    }

    #[test]
    fn zero_mean_gives_zero() {
        let mut rng = substream(0, &[]);
        assert_eq!(sample_nb(0.0, 2.0, &mut rng), 0);
        assert_eq!(sample_poisson(0.0, &mut rng), 0);
        assert_eq!(sample_odp(0.0, 3.0, &mut rng), 0);
    }
}
