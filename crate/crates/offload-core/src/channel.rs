//! Wireless link model: distance-dependent path loss with small-scale
//! fading, and Shannon-capacity link rates.
//!
//! Gain: h = |f|^2 * nu0 * (d0 / d)^gamma, with the distance floored at d0.
//! Rate: R = B * log2(1 + p * h / (N0 * B)). Links are orthogonal, so no
//! interference terms appear anywhere.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;

/// Small-scale fading model for the per-slot channel draw.
///
/// `Rayleigh` draws the squared magnitude of a Rayleigh(sigma = 1) amplitude,
/// i.e. |f|^2 = 2X with X ~ Exp(1), mean 2. `RayleighMean` is its slot
/// average E|f|^2 = 2: a one-second slot spans hundreds of coherence
/// intervals, so the drawn power averages out. `Unit` pins |f|^2 = 1.
/// Beware that raw `Rayleigh` draws make mean slot *times* heavy-tailed:
/// deep fades dominate E[d/R] on low-SNR links.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingMode {
    Unit,
    Rayleigh,
    RayleighMean,
}

impl FadingMode {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "unit" => Some(FadingMode::Unit),
            "rayleigh" => Some(FadingMode::Rayleigh),
            "rayleigh_mean" => Some(FadingMode::RayleighMean),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FadingMode::Unit => "unit",
            FadingMode::Rayleigh => "rayleigh",
            FadingMode::RayleighMean => "rayleigh_mean",
        }
    }
}

/// Draw one fading power |f|^2 for a link, optionally multiplied by
/// log-normal shadowing with the given dB spread.
pub fn draw_fading<R: Rng + ?Sized>(mode: FadingMode, shadowing_sigma_db: f64, rng: &mut R) -> f64 {
    let power = match mode {
        FadingMode::Unit => 1.0,
        FadingMode::RayleighMean => 2.0,
        FadingMode::Rayleigh => 2.0 * rng.sample::<f64, _>(Exp1),
    };
    if shadowing_sigma_db > 0.0 {
        let db: f64 = rng.sample::<f64, _>(StandardNormal) * shadowing_sigma_db;
        power * 10f64.powf(db / 10.0)
    } else {
        power
    }
}

/// Path-loss gain of a link of length `dist_m`, scaled by the drawn fading
/// power. Distances below `ref_distance_m` are floored to it.
pub fn link_gain(fading_power: f64, dist_m: f64, ref_gain: f64, ref_distance_m: f64, pathloss_exp: f64) -> f64 {
    let d = dist_m.max(ref_distance_m);
    fading_power * ref_gain * (ref_distance_m / d).powf(pathloss_exp)
}

/// Shannon rate of an orthogonal link in bit/s. Zero power means a silent
/// link with zero rate.
pub fn shannon_rate(p_w: f64, gain: f64, bandwidth_hz: f64, noise_psd: f64) -> f64 {
    if p_w <= 0.0 {
        return 0.0;
    }
    let snr = p_w * gain / (noise_psd * bandwidth_hz);
    bandwidth_hz * (1.0 + snr).log2()
}

pub fn v2v_gain(fading_power: f64, dist_m: f64, cfg: &SimConfig) -> f64 {
    link_gain(fading_power, dist_m, cfg.ref_gain_v2v, cfg.ref_distance_m, cfg.pathloss_exp_v2v)
}

pub fn v2i_gain(fading_power: f64, dist_m: f64, cfg: &SimConfig) -> f64 {
    link_gain(fading_power, dist_m, cfg.ref_gain_v2i, cfg.ref_distance_m, cfg.pathloss_exp_v2i)
}

pub fn v2v_rate(p_w: f64, gain: f64, cfg: &SimConfig) -> f64 {
    shannon_rate(p_w, gain, cfg.bandwidth_v2v_hz, cfg.noise_psd_w_per_hz)
}

pub fn v2i_rate(p_w: f64, gain: f64, cfg: &SimConfig) -> f64 {
    shannon_rate(p_w, gain, cfg.bandwidth_v2i_hz, cfg.noise_psd_w_per_hz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn cfg() -> SimConfig {
        SimConfig::default()
    }

    #[test]
    fn gains_match_hand_computed_values() {
        // 2e-5 * 10^-3.5 and 2e-5 * {100,200}^-3.5 at unit fading.
        assert_relative_eq!(v2v_gain(1.0, 10.0, &cfg()), 6.324555320337e-9, max_relative = 1e-9);
        assert_relative_eq!(v2i_gain(1.0, 100.0, &cfg()), 2.0e-12, max_relative = 1e-12);
        assert_relative_eq!(v2i_gain(1.0, 200.0, &cfg()), 1.767766952966e-13, max_relative = 1e-9);
    }

    #[test]
    fn rates_match_hand_computed_values() {
        let c = cfg();
        let g = v2v_gain(1.0, 10.0, &c);
        assert_relative_eq!(v2v_rate(0.2, g, &c), 1.494872204829e8, max_relative = 1e-9);
        let g = v2i_gain(1.0, 100.0, &c);
        // SNR is exactly 5, so the rate is 2e7 * log2(6).
        assert_relative_eq!(v2i_rate(0.2, g, &c), 5.169925001442e7, max_relative = 1e-9);
    }

    #[test]
    fn distance_floor_applies_below_reference() {
        let c = cfg();
        assert_eq!(v2v_gain(1.0, 0.25, &c), v2v_gain(1.0, 1.0, &c));
        assert!(v2v_gain(1.0, 1.5, &c) < v2v_gain(1.0, 1.0, &c));
    }

    #[test]
    fn zero_power_is_a_silent_link() {
        let c = cfg();
        assert_eq!(v2v_rate(0.0, 1e-9, &c), 0.0);
        assert_eq!(v2i_rate(0.0, 1e-9, &c), 0.0);
    }

    #[test]
    fn fading_modes_have_expected_powers() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        assert_eq!(draw_fading(FadingMode::Unit, 0.0, &mut rng), 1.0);
        assert_eq!(draw_fading(FadingMode::RayleighMean, 0.0, &mut rng), 2.0);

        // |f|^2 = 2 Exp(1): mean 2 and P(|f|^2 > 2) = 1/e.
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut above = 0usize;
        for _ in 0..n {
            let f = draw_fading(FadingMode::Rayleigh, 0.0, &mut rng);
            sum += f;
            if f > 2.0 {
                above += 1;
            }
        }
        let mean = sum / n as f64;
        let tail = above as f64 / n as f64;
        assert!((mean - 2.0).abs() < 0.02, "mean {mean}");
        assert!((tail - (-1f64).exp()).abs() < 0.01, "tail {tail}");
    }

    #[test]
    fn shadowing_spreads_around_unit_median() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let n = 200_000;
        let mut above = 0usize;
        for _ in 0..n {
            if draw_fading(FadingMode::Unit, 4.0, &mut rng) > 1.0 {
                above += 1;
            }
        }
        let frac = above as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.01, "median fraction {frac}");
    }
}
