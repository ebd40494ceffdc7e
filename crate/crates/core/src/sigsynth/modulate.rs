use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::pulse::{gaussian_taps, PulseShape};
use super::{IQFrame, ModulationScheme};
use crate::error::{Error, Result};

/// Waveform parameters shared by all schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModulatorConfig {
    pub pulse: PulseShape,
    pub gfsk_bt: f64,
    /// Gaussian filter length in symbols.
    pub gfsk_span: usize,
    pub fsk_mod_index: f64,
    /// Peak WBFM frequency deviation, cycles per sample.
    pub fm_deviation: f64,
    pub am_depth: f64,
    /// Probability that an audio block is silent.
    pub silence_prob: f64,
    pub silence_block: usize,
}

impl Default for ModulatorConfig {
    fn default() -> Self {
        Self {
            pulse: PulseShape::default(),
            gfsk_bt: 0.35,
            gfsk_span: 4,
            fsk_mod_index: 0.5,
            fm_deviation: 0.1,
            am_depth: 0.5,
            silence_prob: 0.2,
            silence_block: 64,
        }
    }
}

/// Clean, unit-power frame of `n_samples` samples with the default waveform
/// parameters.
pub fn modulate(
    scheme: ModulationScheme,
    sps: usize,
    n_samples: usize,
    seed: u64,
) -> Result<IQFrame> {
    modulate_with(scheme, sps, n_samples, seed, &ModulatorConfig::default())
}

pub fn modulate_with(
    scheme: ModulationScheme,
    sps: usize,
    n_samples: usize,
    seed: u64,
    cfg: &ModulatorConfig,
) -> Result<IQFrame> {
    if sps < 2 {
        let what = match scheme {
            ModulationScheme::Cpfsk | ModulationScheme::Gfsk => "phase accumulator",
            _ => "pulse shaping",
        };
        return Err(Error::config(format!(
            "{scheme}: {what} requires at least 2 samples per symbol, got {sps}"
        )));
    }
    if n_samples < sps {
        return Err(Error::config(format!(
            "frame of {n_samples} samples is shorter than one symbol ({sps} samples)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = match scheme {
        ModulationScheme::Cpfsk => fsk(&mut rng, sps, n_samples, cfg.fsk_mod_index, None),
        ModulationScheme::Gfsk => {
            let taps = gaussian_taps(cfg.gfsk_bt, cfg.gfsk_span, sps);
            fsk(&mut rng, sps, n_samples, cfg.fsk_mod_index, Some(&taps))
        }
        ModulationScheme::AmDsb => {
            let audio = audio_source(&mut rng, n_samples, cfg);
            audio
                .iter()
                .map(|&m| Complex64::new(1.0 + cfg.am_depth * m, 0.0))
                .collect()
        }
        ModulationScheme::AmSsb => analytic_signal(&audio_source(&mut rng, n_samples, cfg)),
        ModulationScheme::Wbfm => {
            let audio = audio_source(&mut rng, n_samples, cfg);
            let mut phase = 0.0;
            audio
                .iter()
                .map(|&m| {
                    phase += 2.0 * PI * cfg.fm_deviation * m;
                    Complex64::from_polar(1.0, phase)
                })
                .collect()
        }
        linear => linear_frame(&mut rng, linear, sps, n_samples, cfg.pulse),
    };
    normalize_power(&mut samples)?;
    Ok(IQFrame {
        samples,
        label: scheme,
        snr_db: None,
        sps,
        channel: None,
    })
}

/// Scales `samples` in place to unit mean power.
pub fn normalize_power(samples: &mut [Complex64]) -> Result<()> {
    let p = super::mean_power(samples);
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::Degenerate(
            "cannot normalize a frame with zero power".into(),
        ));
    }
    let k = 1.0 / p.sqrt();
    samples.iter_mut().for_each(|s| *s *= k);
    Ok(())
}

/// Maps symbol indices to constellation points. Every alphabet has unit
/// mean power over its uniformly drawn symbols.
pub fn map_symbols(scheme: ModulationScheme, indices: &[usize]) -> Result<Vec<Complex64>> {
    let m = scheme.constellation_size().ok_or_else(|| {
        Error::config(format!("{scheme} is not a linearly modulated scheme"))
    })?;
    indices
        .iter()
        .map(|&i| {
            if i >= m {
                return Err(Error::Index { index: i, len: m });
            }
            Ok(constellation_point(scheme, i))
        })
        .collect()
}

fn constellation_point(scheme: ModulationScheme, i: usize) -> Complex64 {
    match scheme {
        ModulationScheme::Bpsk => Complex64::new(if i == 0 { 1.0 } else { -1.0 }, 0.0),
        ModulationScheme::Qpsk => {
            let re = if i & 1 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
            let im = if i & 2 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
            Complex64::new(re, im)
        }
        ModulationScheme::Psk8 => Complex64::from_polar(1.0, 2.0 * PI * i as f64 / 8.0),
        ModulationScheme::Pam4 => Complex64::new(pam_level(i, 4) / 5f64.sqrt(), 0.0),
        ModulationScheme::Qam16 => {
            Complex64::new(pam_level(i % 4, 4), pam_level(i / 4, 4)) / 10f64.sqrt()
        }
        ModulationScheme::Qam64 => {
            Complex64::new(pam_level(i % 8, 8), pam_level(i / 8, 8)) / 42f64.sqrt()
        }
        _ => unreachable!("not a linear scheme"),
    }
}

/// Odd-integer amplitude levels -(m-1), ..., m-1.
fn pam_level(i: usize, m: usize) -> f64 {
    (2 * i) as f64 - (m - 1) as f64
}

/// Upsamples `symbols` by `sps` and filters with the pulse, compensating the
/// filter delay so sample `k * sps` sits on symbol `k`.
pub fn shape_symbols(symbols: &[Complex64], sps: usize, pulse: PulseShape) -> Vec<Complex64> {
    let (taps, delay) = pulse.taps(sps);
    let n = symbols.len() * sps;
    (0..n)
        .map(|j| {
            let pos = j + delay;
            let mut acc = Complex64::new(0.0, 0.0);
            // Only taps landing on a nonzero (symbol) sample of the upsampled stream.
            let first = pos.saturating_sub(taps.len() - 1);
            let mut k = first.div_ceil(sps);
            while k * sps <= pos && k < symbols.len() {
                acc += symbols[k] * taps[pos - k * sps];
                k += 1;
            }
            acc
        })
        .collect()
}

fn linear_frame(
    rng: &mut ChaCha8Rng,
    scheme: ModulationScheme,
    sps: usize,
    n_samples: usize,
    pulse: PulseShape,
) -> Vec<Complex64> {
    let m = scheme.constellation_size().expect("linear scheme");
    let span = match pulse {
        PulseShape::Rectangular => 1,
        PulseShape::RootRaisedCosine { span, .. } => span,
    };
    let n_sym = n_samples.div_ceil(sps) + 2 * span + 2;
    let indices: Vec<usize> = (0..n_sym).map(|_| rng.random_range(0..m)).collect();
    let symbols: Vec<Complex64> = indices.iter().map(|&i| constellation_point(scheme, i)).collect();
    let shaped = shape_symbols(&symbols, sps, pulse);
    let start = span * sps + rng.random_range(0..sps);
    shaped[start..start + n_samples].to_vec()
}

/// Continuous-phase FSK with binary symbols; `freq_taps` adds Gaussian
/// frequency shaping (GFSK).
fn fsk(
    rng: &mut ChaCha8Rng,
    sps: usize,
    n_samples: usize,
    mod_index: f64,
    freq_taps: Option<&[f64]>,
) -> Vec<Complex64> {
    let guard = freq_taps.map_or(0, |t| t.len());
    let n_sym = (n_samples + guard).div_ceil(sps) + 2;
    let nrz: Vec<f64> = (0..n_sym)
        .flat_map(|_| {
            let a = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            std::iter::repeat_n(a, sps)
        })
        .collect();
    let freq: Vec<f64> = match freq_taps {
        None => nrz,
        Some(taps) => (0..nrz.len())
            .map(|j| {
                taps.iter()
                    .enumerate()
                    .filter(|&(k, _)| j >= k)
                    .map(|(k, t)| t * nrz[j - k])
                    .sum()
            })
            .collect(),
    };
    let start = guard + rng.random_range(0..sps);
    let mut phase = 0.0;
    freq[start..start + n_samples]
        .iter()
        .map(|&f| {
            phase += PI * mod_index * f / sps as f64;
            Complex64::from_polar(1.0, phase)
        })
        .collect()
}

/// Sum of three tones in 0.01..0.05 cycles/sample, gated off in whole
/// blocks with the configured silence probability. At least one block per
/// frame is left voiced so the frame always carries power.
fn audio_source(rng: &mut ChaCha8Rng, n: usize, cfg: &ModulatorConfig) -> Vec<f64> {
    let tones: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.3..1.0),
                rng.random_range(0.01..0.05),
                rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let total_amp: f64 = tones.iter().map(|t| t.0).sum();
    let block = cfg.silence_block.max(1);
    let n_blocks = n.div_ceil(block);
    let mut silent: Vec<bool> = (0..n_blocks)
        .map(|_| rng.random_bool(cfg.silence_prob.clamp(0.0, 1.0)))
        .collect();
    if silent.iter().all(|&s| s) {
        let keep = rng.random_range(0..n_blocks);
        silent[keep] = false;
    }
    (0..n)
        .map(|t| {
            if silent[t / block] {
                0.0
            } else {
                tones
                    .iter()
                    .map(|&(a, f, ph)| a * (2.0 * PI * f * t as f64 + ph).sin())
                    .sum::<f64>()
                    / total_amp
            }
        })
        .collect()
}

/// Upper-sideband analytic signal m + j·H{m} via the FFT.
fn analytic_signal(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let h = if k == 0 || (n % 2 == 0 && k == n / 2) {
            1.0
        } else if k < n.div_ceil(2) {
            2.0
        } else {
            0.0
        };
        *v *= h;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter_mut().for_each(|v| *v /= n as f64);
    buf
}
