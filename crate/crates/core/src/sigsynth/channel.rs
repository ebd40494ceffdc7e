use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{mean_power, IQFrame};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingTap {
    /// Delay in samples.
    pub delay: usize,
    pub gain: Complex64,
}

/// Which channel stages are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Impairments {
    pub fading: bool,
    pub sro: bool,
    pub cfo: bool,
    pub awgn: bool,
}

impl Impairments {
    pub const NONE: Impairments = Impairments {
        fading: false,
        sro: false,
        cfo: false,
        awgn: false,
    };
    pub const ALL: Impairments = Impairments {
        fading: true,
        sro: true,
        cfo: true,
        awgn: true,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub snr_db: f64,
    /// Carrier frequency offset as a fraction of the sample rate.
    pub cfo_frac: f64,
    /// Carrier phase at sample 0, applied with the frequency offset.
    pub phase_offset: f64,
    pub sro_ppm: f64,
    pub fading_taps: Vec<FadingTap>,
    pub enable: Impairments,
    pub rng_seed: u64,
}

impl ChannelConfig {
    /// Every stage disabled; `apply_channel` returns its input unchanged.
    pub fn identity() -> Self {
        Self {
            snr_db: f64::INFINITY,
            cfo_frac: 0.0,
            phase_offset: 0.0,
            sro_ppm: 0.0,
            fading_taps: Vec::new(),
            enable: Impairments::NONE,
            rng_seed: 0,
        }
    }

    /// AWGN only.
    pub fn awgn(snr_db: f64, rng_seed: u64) -> Self {
        Self {
            snr_db,
            enable: Impairments {
                awgn: true,
                ..Impairments::NONE
            },
            rng_seed,
            ..Self::identity()
        }
    }
}

/// Multipath profile: a Rician channel whose line-of-sight component sits on
/// the first tap and whose diffuse power follows `powers` over `delays`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FadingProfile {
    pub k_factor: f64,
    pub delays: Vec<usize>,
    /// Relative diffuse power per tap.
    pub powers: Vec<f64>,
}

impl Default for FadingProfile {
    fn default() -> Self {
        Self {
            k_factor: 4.0,
            delays: vec![0, 1, 2],
            powers: vec![1.0, 0.5, 0.25],
        }
    }
}

impl FadingProfile {
    /// Draws one channel realization, normalized to unit total tap power.
    pub fn draw_taps<R: Rng>(&self, rng: &mut R) -> Vec<FadingTap> {
        let k = self.k_factor.max(0.0);
        let diffuse_total: f64 = self.powers.iter().sum();
        let los_power = k / (k + 1.0);
        let mut taps: Vec<FadingTap> = self
            .delays
            .iter()
            .zip(&self.powers)
            .enumerate()
            .map(|(i, (&delay, &p))| {
                let var = if diffuse_total > 0.0 {
                    p / diffuse_total / (k + 1.0)
                } else {
                    0.0
                };
                let sigma = (var / 2.0).sqrt();
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                let mut gain = Complex64::new(re * sigma, im * sigma);
                if i == 0 {
                    gain += Complex64::from_polar(los_power.sqrt(), rng.random_range(0.0..2.0 * PI));
                }
                FadingTap { delay, gain }
            })
            .collect();
        normalize_taps(&mut taps);
        taps
    }
}

fn normalize_taps(taps: &mut [FadingTap]) {
    let p: f64 = taps.iter().map(|t| t.gain.norm_sqr()).sum();
    if p > 0.0 {
        let k = 1.0 / p.sqrt();
        taps.iter_mut().for_each(|t| t.gain *= k);
    }
}

/// Applies multipath, sample-rate offset, carrier offset and AWGN, in that
/// order. The output has the input's length. Noise is scaled against the
/// measured power of the impaired signal so the per-sample SNR is exact in
/// expectation.
pub fn apply_channel(frame: &IQFrame, cfg: &ChannelConfig) -> IQFrame {
    let on = cfg.enable;
    let mut x = frame.samples.clone();

    if on.fading && !cfg.fading_taps.is_empty() {
        let mut taps = cfg.fading_taps.clone();
        normalize_taps(&mut taps);
        x = (0..x.len())
            .map(|n| {
                taps.iter()
                    .filter(|t| t.delay <= n)
                    .map(|t| x[n - t.delay] * t.gain)
                    .sum()
            })
            .collect();
    }

    if on.sro && cfg.sro_ppm != 0.0 {
        let ratio = 1.0 + cfg.sro_ppm * 1e-6;
        let last = x.len().saturating_sub(1);
        x = (0..x.len())
            .map(|n| {
                let pos = n as f64 * ratio;
                let i = (pos.floor() as usize).min(last);
                let frac = (pos - i as f64).clamp(0.0, 1.0);
                let next = (i + 1).min(last);
                x[i] * (1.0 - frac) + x[next] * frac
            })
            .collect();
    }

    if on.cfo {
        for (n, s) in x.iter_mut().enumerate() {
            *s *= Complex64::from_polar(1.0, 2.0 * PI * cfg.cfo_frac * n as f64 + cfg.phase_offset);
        }
    }

    let mut snr_db = frame.snr_db;
    if on.awgn {
        let p = mean_power(&x);
        let sigma = (p / 10f64.powf(cfg.snr_db / 10.0) / 2.0).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        for s in x.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *s += Complex64::new(re * sigma, im * sigma);
        }
        snr_db = Some(cfg.snr_db);
    }

    IQFrame {
        samples: x,
        label: frame.label,
        snr_db,
        sps: frame.sps,
        channel: Some(cfg.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigsynth::{modulate, ModulationScheme};
    use rustfft::FftPlanner;

    fn tone(freq: f64, n: usize) -> IQFrame {
        IQFrame {
            samples: (0..n)
                .map(|t| Complex64::from_polar(1.0, 2.0 * PI * freq * t as f64))
                .collect(),
            label: ModulationScheme::Bpsk,
            snr_db: None,
            sps: 4,
            channel: None,
        }
    }

    fn peak_freq(x: &[Complex64]) -> f64 {
        let mut buf = x.to_vec();
        FftPlanner::new().plan_fft_forward(x.len()).process(&mut buf);
        let (k, _) = buf
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .unwrap();
        k as f64 / x.len() as f64
    }

    #[test]
    fn identity_is_bit_exact() {
        let f = modulate(ModulationScheme::Qam16, 4, 512, 1).unwrap();
        let out = apply_channel(&f, &ChannelConfig::identity());
        assert_eq!(out.samples, f.samples);
        let twice = apply_channel(&out, &ChannelConfig::identity());
        assert_eq!(twice.samples, f.samples);
    }

    #[test]
    fn cfo_moves_tone_peak() {
        let f = tone(0.1, 1000);
        assert!((peak_freq(&f.samples) - 0.1).abs() < 1e-9);
        let cfg = ChannelConfig {
            cfo_frac: 0.05,
            enable: Impairments {
                cfo: true,
                ..Impairments::NONE
            },
            ..ChannelConfig::identity()
        };
        let out = apply_channel(&f, &cfg);
        assert!((peak_freq(&out.samples) - 0.15).abs() < 1e-9);
    }

    #[test]
    fn awgn_hits_requested_snr() {
        let f = tone(0.01, 100_000);
        for snr in [0.0, 10.0, -5.0] {
            let out = apply_channel(&f, &ChannelConfig::awgn(snr, 42));
            let noise: f64 = out
                .samples
                .iter()
                .zip(&f.samples)
                .map(|(y, x)| (y - x).norm_sqr())
                .sum::<f64>()
                / f.len() as f64;
            let measured = 10.0 * (f.mean_power() / noise).log10();
            assert!((measured - snr).abs() < 0.5, "snr {snr}: {measured}");
            assert_eq!(out.snr_db, Some(snr));
        }
    }

    #[test]
    fn fading_taps_are_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let taps = FadingProfile::default().draw_taps(&mut rng);
            let p: f64 = taps.iter().map(|t| t.gain.norm_sqr()).sum();
            assert!((p - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_unit_tap_is_identity() {
        let f = modulate(ModulationScheme::Qpsk, 4, 128, 5).unwrap();
        let cfg = ChannelConfig {
            fading_taps: vec![FadingTap {
                delay: 0,
                gain: Complex64::new(1.0, 0.0),
            }],
            enable: Impairments {
                fading: true,
                ..Impairments::NONE
            },
            ..ChannelConfig::identity()
        };
        assert_eq!(apply_channel(&f, &cfg).samples, f.samples);
    }

    #[test]
    fn all_stages_preserve_length() {
        let f = modulate(ModulationScheme::Gfsk, 8, 256, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = ChannelConfig {
            snr_db: 10.0,
            cfo_frac: 0.001,
            phase_offset: 0.3,
            sro_ppm: 100.0,
            fading_taps: FadingProfile::default().draw_taps(&mut rng),
            enable: Impairments::ALL,
            rng_seed: 1,
        };
        let out = apply_channel(&f, &cfg);
        assert_eq!(out.len(), f.len());
        assert_eq!(out.snr_db, Some(10.0));
    }

    #[test]
    fn zero_sro_is_exact() {
        let f = modulate(ModulationScheme::Bpsk, 4, 128, 8).unwrap();
        let cfg = ChannelConfig {
            enable: Impairments {
                sro: true,
                ..Impairments::NONE
            },
            ..ChannelConfig::identity()
        };
        assert_eq!(apply_channel(&f, &cfg).samples, f.samples);
    }
}
