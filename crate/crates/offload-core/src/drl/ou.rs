//! Mean-reverting exploration noise for deterministic continuous policies.

use rand::Rng;
use rand_distr::StandardNormal;

/// Discrete-time Ornstein-Uhlenbeck process around zero:
/// x' = x + theta * (0 - x) + sigma * N(0, 1), one state per action dim.
#[derive(Debug, Clone)]
pub struct OuNoise {
    theta: f64,
    sigma: f64,
    state: Vec<f64>,
}

impl OuNoise {
    pub fn new(dim: usize, theta: f64, sigma: f64) -> Self {
        OuNoise { theta, sigma, state: vec![0.0; dim] }
    }

    /// Return to the zero state (episode boundary).
    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|x| *x = 0.0);
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> &[f64] {
        for x in &mut self.state {
            let noise: f64 = rng.sample(StandardNormal);
            *x += self.theta * (0.0 - *x) + self.sigma * noise;
        }
        &self.state
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn reverts_toward_zero_without_noise() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut ou = OuNoise::new(1, 0.1, 0.0);
        ou.state[0] = 1.0;
        assert_relative_eq!(ou.step(&mut rng)[0], 0.9, max_relative = 1e-12);
        ou.reset();
        assert_eq!(ou.step(&mut rng)[0], 0.0);
    }

    #[test]
    fn long_run_variance_matches_the_discrete_closed_form() {
        let (theta, sigma) = (0.1, 0.05);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut ou = OuNoise::new(1, theta, sigma);
        // Burn in, then measure.
        for _ in 0..10_000 {
            ou.step(&mut rng);
        }
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let n = 1_000_000;
        for _ in 0..n {
            let x = ou.step(&mut rng)[0];
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        let expect = sigma * sigma / (2.0 * theta - theta * theta);
        assert!((var - expect).abs() / expect < 0.1, "var {var}, closed form {expect}");
    }
}
