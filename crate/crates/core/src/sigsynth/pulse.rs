use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Transmit pulse used for the linearly modulated schemes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PulseShape {
    /// One sample of amplitude 1 repeated `sps` times.
    Rectangular,
    /// Root-raised-cosine with the given roll-off, truncated to `span` symbols.
    RootRaisedCosine { rolloff: f64, span: usize },
}

impl Default for PulseShape {
    fn default() -> Self {
        PulseShape::RootRaisedCosine {
            rolloff: 0.35,
            span: 8,
        }
    }
}

impl PulseShape {
    /// FIR taps and the group delay (in samples) to compensate.
    pub fn taps(&self, sps: usize) -> (Vec<f64>, usize) {
        match *self {
            PulseShape::Rectangular => (vec![1.0; sps], 0),
            PulseShape::RootRaisedCosine { rolloff, span } => {
                let taps = rrc_taps(rolloff, span, sps);
                let delay = (taps.len() - 1) / 2;
                (taps, delay)
            }
        }
    }
}

/// Root-raised-cosine taps with unit energy, `span * sps + 1` long.
pub fn rrc_taps(rolloff: f64, span: usize, sps: usize) -> Vec<f64> {
    let n = span * sps + 1;
    let mid = (n - 1) as f64 / 2.0;
    let b = rolloff;
    let mut taps: Vec<f64> = (0..n)
        .map(|k| {
            let t = (k as f64 - mid) / sps as f64;
            if t.abs() < 1e-12 {
                1.0 - b + 4.0 * b / PI
            } else if b > 0.0 && (t.abs() - 1.0 / (4.0 * b)).abs() < 1e-9 {
                (b / 2f64.sqrt())
                    * ((1.0 + 2.0 / PI) * (PI / (4.0 * b)).sin()
                        + (1.0 - 2.0 / PI) * (PI / (4.0 * b)).cos())
            } else {
                let num = (PI * t * (1.0 - b)).sin() + 4.0 * b * t * (PI * t * (1.0 + b)).cos();
                let den = PI * t * (1.0 - (4.0 * b * t).powi(2));
                num / den
            }
        })
        .collect();
    let energy = taps.iter().map(|x| x * x).sum::<f64>().sqrt();
    taps.iter_mut().for_each(|x| *x /= energy);
    taps
}

/// Gaussian frequency-shaping taps for GFSK, normalized to unit DC gain.
pub fn gaussian_taps(bt: f64, span: usize, sps: usize) -> Vec<f64> {
    let n = span * sps + 1;
    let mid = (n - 1) as f64 / 2.0;
    let alpha = 2.0 * PI * PI * bt * bt / 2f64.ln();
    let mut taps: Vec<f64> = (0..n)
        .map(|k| {
            let t = (k as f64 - mid) / sps as f64;
            (-alpha * t * t).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|x| *x /= sum);
    taps
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rrc_is_symmetric_with_unit_energy() {
        let taps = rrc_taps(0.35, 8, 4);
        assert_eq!(taps.len(), 33);
        for i in 0..taps.len() {
            assert!((taps[i] - taps[taps.len() - 1 - i]).abs() < 1e-12);
        }
        let e: f64 = taps.iter().map(|x| x * x).sum();
        assert!((e - 1.0).abs() < 1e-12);
        assert!(taps.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn rrc_matched_pair_is_nyquist() {
        // RRC convolved with itself is a raised cosine: zero at nonzero symbol
        // instants (up to truncation error).
        let sps = 8;
        let taps = rrc_taps(0.35, 16, sps);
        let n = taps.len();
        let full: Vec<f64> = (0..2 * n - 1)
            .map(|j| {
                (0..n)
                    .filter(|&k| j >= k && j - k < n)
                    .map(|k| taps[k] * taps[j - k])
                    .sum()
            })
            .collect();
        let centre = n - 1;
        assert!((full[centre] - 1.0).abs() < 1e-9);
        for m in 1..4 {
            assert!(full[centre + m * sps].abs() < 0.01, "isi at {m}");
        }
    }

    #[test]
    fn gaussian_has_unit_dc_gain() {
        let g = gaussian_taps(0.35, 4, 8);
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let peak = g.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(peak, g[g.len() / 2]);
    }
}
