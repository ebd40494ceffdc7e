use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::FeatureSeq;
use crate::error::{Error, Result};

/// Sequential-scan parameters. Each center frequency is visited for
/// `averaging * fft_size` samples; the per-band spectra are concatenated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub fft_size: usize,
    /// Number of FFT blocks averaged per center frequency.
    pub averaging: usize,
    /// Center frequencies in cycles per sample, strictly increasing.
    pub center_freqs: Vec<f64>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            fft_size: 256,
            averaging: 5,
            center_freqs: vec![0.0],
        }
    }
}

impl ScanConfig {
    pub fn segment_count(&self) -> usize {
        self.center_freqs.len()
    }

    /// Samples spent at one center frequency.
    pub fn dwell(&self) -> usize {
        self.averaging * self.fft_size
    }

    pub fn samples_needed(&self) -> usize {
        self.segment_count() * self.dwell()
    }

    pub fn validate(&self) -> Result<()> {
        if self.fft_size < 2 || !self.fft_size.is_power_of_two() {
            return Err(Error::config(format!(
                "fft_size {} must be a power of two >= 2",
                self.fft_size
            )));
        }
        if self.averaging == 0 {
            return Err(Error::config("averaging factor must be at least 1"));
        }
        if self.center_freqs.is_empty() {
            return Err(Error::config("scan needs at least one center frequency"));
        }
        if self.center_freqs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("center frequencies must be strictly increasing"));
        }
        Ok(())
    }
}

/// Concatenated averaged magnitude spectra, `segment_count * fft_size` bins.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdVector {
    pub bins: Vec<f64>,
    pub config: ScanConfig,
}

impl PsdVector {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }
}

/// Reusable planned FFT for averaging magnitude spectra of one size.
pub struct SpectrumAverager {
    fft: Arc<dyn Fft<f64>>,
    size: usize,
}

impl SpectrumAverager {
    pub fn new(fft_size: usize) -> Self {
        Self {
            fft: FftPlanner::new().plan_fft_forward(fft_size),
            size: fft_size,
        }
    }

    /// Mean over blocks of the unnormalized |FFT|, in natural bin order.
    pub fn average<I, S>(&self, segments: I) -> Result<Vec<f64>>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[Complex64]>,
    {
        let mut acc = vec![0.0; self.size];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.size];
        let mut count = 0usize;
        for seg in segments {
            let seg = seg.as_ref();
            if seg.len() != self.size {
                return Err(Error::Shape {
                    what: "FFT segment length",
                    expected: self.size,
                    got: seg.len(),
                });
            }
            buf.copy_from_slice(seg);
            self.fft.process(&mut buf);
            acc.iter_mut().zip(&buf).for_each(|(a, v)| *a += v.norm());
            count += 1;
        }
        if count == 0 {
            return Err(Error::config("averaging needs at least one segment"));
        }
        acc.iter_mut().for_each(|a| *a /= count as f64);
        Ok(acc)
    }
}

/// Elementwise mean of |FFT(segment)| over `segments`, each `fft_size` long.
pub fn averaged_magnitude_fft<S: AsRef<[Complex64]>>(
    segments: &[S],
    fft_size: usize,
) -> Result<Vec<f64>> {
    SpectrumAverager::new(fft_size).average(segments)
}

/// Sequentially scans `source`: for each center frequency in order, mixes
/// the next `averaging` blocks down by that frequency (phase referenced to
/// the absolute sample index), averages their magnitude spectra and appends
/// the row. The time cursor advances by one dwell per center frequency.
pub fn sequential_scan(source: &[Complex64], cfg: &ScanConfig) -> Result<PsdVector> {
    cfg.validate()?;
    let needed = cfg.samples_needed();
    if source.len() < needed {
        return Err(Error::Truncated {
            needed,
            available: source.len(),
        });
    }
    let averager = SpectrumAverager::new(cfg.fft_size);
    let mut bins = Vec::with_capacity(needed / cfg.averaging);
    for (i, &f) in cfg.center_freqs.iter().enumerate() {
        let cursor = i * cfg.dwell();
        let blocks = (0..cfg.averaging).map(|m| {
            let start = cursor + m * cfg.fft_size;
            source[start..start + cfg.fft_size]
                .iter()
                .enumerate()
                .map(|(n, s)| s * Complex64::from_polar(1.0, -2.0 * PI * f * (start + n) as f64))
                .collect::<Vec<_>>()
        });
        bins.extend(averager.average(blocks)?);
    }
    Ok(PsdVector {
        bins,
        config: cfg.clone(),
    })
}

/// Classifier input from a PSD vector: one bin per timestep, scaled so the
/// largest bin is 1.
pub fn psd_features(psd: &PsdVector) -> Result<FeatureSeq> {
    let max = psd.bins.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0) || !max.is_finite() {
        return Err(Error::Degenerate("PSD vector has no positive bin".into()));
    }
    FeatureSeq::new(1, psd.bins.iter().map(|b| (b / max) as f32).collect())
}

/// One vector per row; the header row lists bin indices.
pub fn write_psd_csv<W: Write>(mut w: W, vectors: &[Vec<f64>]) -> std::io::Result<()> {
    let n = vectors.first().map_or(0, |v| v.len());
    let header: Vec<String> = (0..n).map(|i| i.to_string()).collect();
    writeln!(w, "{}", header.join(","))?;
    for v in vectors {
        let row: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()
}

pub fn read_psd_csv<R: BufRead>(r: R) -> Result<Vec<Vec<f64>>> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format("empty PSD CSV"))?
        .map_err(|e| Error::format(e.to_string()))?;
    let width = if header.is_empty() { 0 } else { header.split(',').count() };
    lines
        .map(|line| {
            let line = line.map_err(|e| Error::format(e.to_string()))?;
            let row = line
                .split(',')
                .map(|v| v.parse::<f64>().map_err(|e| Error::format(format!("{v}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != width {
                return Err(Error::Shape {
                    what: "PSD CSV row",
                    expected: width,
                    got: row.len(),
                });
            }
            Ok(row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigsynth::{modulate, ModulationScheme};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct O(N²) DFT magnitude, independent of the FFT library.
    fn dft_magnitude(x: &[Complex64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(t, v)| {
                        v * Complex64::from_polar(1.0, -2.0 * PI * (k * t % n) as f64 / n as f64)
                    })
                    .sum::<Complex64>()
                    .norm()
            })
            .collect()
    }

    fn random_segments(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Vec<Vec<Complex64>> {
        (0..m)
            .map(|_| {
                (0..n)
                    .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let segs = random_segments(&mut rng, 5, 64);
        let got = averaged_magnitude_fft(&segs, 64).unwrap();
        let mut expected = vec![0.0; 64];
        for s in &segs {
            for (e, v) in expected.iter_mut().zip(dft_magnitude(s)) {
                *e += v / 5.0;
            }
        }
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-6);
        }
    }

    #[test]
    fn identical_segments_average_to_single_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let seg = random_segments(&mut rng, 1, 32).remove(0);
        let single = averaged_magnitude_fft(&[seg.clone()], 32).unwrap();
        let many = averaged_magnitude_fft(&vec![seg; 7], 32).unwrap();
        for (a, b) in single.iter().zip(&many) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_input_is_pure_dc() {
        let a = 0.7;
        let seg = vec![Complex64::new(a, 0.0); 256];
        let out = averaged_magnitude_fft(&[seg.clone(), seg], 256).unwrap();
        assert!((out[0] - a * 256.0).abs() < 1e-9);
        assert!(out[1..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn mismatched_segment_is_shape_error() {
        let segs = vec![vec![Complex64::new(1.0, 0.0); 8], vec![Complex64::new(1.0, 0.0); 7]];
        assert!(matches!(
            averaged_magnitude_fft(&segs, 8),
            Err(Error::Shape { expected: 8, got: 7, .. })
        ));
        let none: Vec<Vec<Complex64>> = vec![];
        assert!(averaged_magnitude_fft(&none, 8).is_err());
    }

    #[test]
    fn global_phase_rotation_is_invisible() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let segs = random_segments(&mut rng, 3, 64);
        let rot = Complex64::from_polar(1.0, 1.234);
        let rotated: Vec<Vec<Complex64>> = segs
            .iter()
            .map(|s| s.iter().map(|v| v * rot).collect())
            .collect();
        let a = averaged_magnitude_fft(&segs, 64).unwrap();
        let b = averaged_magnitude_fft(&rotated, 64).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn scan_length_and_consumption() {
        let cfg = ScanConfig {
            fft_size: 256,
            averaging: 3,
            center_freqs: vec![-0.25, 0.25],
        };
        let src = vec![Complex64::new(1.0, 0.5); cfg.samples_needed()];
        assert_eq!(cfg.samples_needed(), 2 * 3 * 256);
        let psd = sequential_scan(&src, &cfg).unwrap();
        assert_eq!(psd.len(), 512);
        assert!(psd.bins.iter().all(|&b| b >= 0.0));
        assert!(matches!(
            sequential_scan(&src[..src.len() - 1], &cfg),
            Err(Error::Truncated { needed: 1536, available: 1535 })
        ));
    }

    #[test]
    fn tone_lands_in_second_segment() {
        let fft = 128;
        let cfg = ScanConfig {
            fft_size: fft,
            averaging: 4,
            center_freqs: vec![-0.25, 0.25],
        };
        // Tone at 0.25 + 10/128 cycles/sample sits 10 bins above the second
        // segment's center.
        let f_tone = 0.25 + 10.0 / fft as f64;
        let src: Vec<Complex64> = (0..cfg.samples_needed())
            .map(|n| Complex64::from_polar(1.0, 2.0 * PI * f_tone * n as f64))
            .collect();
        let psd = sequential_scan(&src, &cfg).unwrap();
        let (peak, _) = psd
            .bins
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert_eq!(peak, fft + 10);
    }

    #[test]
    fn invalid_scan_configs() {
        let bad = [
            ScanConfig { fft_size: 100, ..ScanConfig::default() },
            ScanConfig { fft_size: 1, ..ScanConfig::default() },
            ScanConfig { averaging: 0, ..ScanConfig::default() },
            ScanConfig { center_freqs: vec![], ..ScanConfig::default() },
            ScanConfig { center_freqs: vec![0.1, 0.1], ..ScanConfig::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        assert_eq!(ScanConfig::default().fft_size, 256);
        assert_eq!(ScanConfig::default().averaging, 5);
    }

    #[test]
    fn same_pulse_psk_qam_spectra_converge() {
        // QPSK, 8PSK and QAM16 through the same RRC filter have the same
        // expected spectrum; averaging more blocks pulls them together.
        let fft = 64;
        let deviation = |m: usize| -> f64 {
            let spectra: Vec<Vec<f64>> = [ModulationScheme::Qpsk, ModulationScheme::Psk8, ModulationScheme::Qam16]
                .iter()
                .map(|&s| {
                    let f = modulate(s, 4, fft * m, 17).unwrap();
                    let segs: Vec<&[Complex64]> = f.samples.chunks(fft).collect();
                    averaged_magnitude_fft(&segs, fft).unwrap()
                })
                .collect();
            let mut total = 0.0;
            let mut pairs = 0.0;
            for a in 0..3 {
                for b in a + 1..3 {
                    let num: f64 = spectra[a].iter().zip(&spectra[b]).map(|(x, y)| (x - y).abs()).sum();
                    let den: f64 = spectra[a].iter().zip(&spectra[b]).map(|(x, y)| (x + y) / 2.0).sum();
                    total += num / den;
                    pairs += 1.0;
                }
            }
            total / pairs
        };
        let d_small = deviation(2);
        let d_large = deviation(128);
        assert!(d_large < d_small, "{d_large} !< {d_small}");
        assert!(d_large < 0.1, "{d_large}");
    }

    #[test]
    fn psd_features_are_max_normalized() {
        let psd = PsdVector {
            bins: vec![1.0, 4.0, 2.0],
            config: ScanConfig::default(),
        };
        let f = psd_features(&psd).unwrap();
        assert_eq!(f.as_slice(), &[0.25, 1.0, 0.5]);
        let zero = PsdVector { bins: vec![0.0; 3], config: ScanConfig::default() };
        assert!(psd_features(&zero).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let v = vec![vec![0.1, 2.5, 3.0], vec![1e-9, 0.0, 7.25]];
        let mut buf = Vec::new();
        write_psd_csv(&mut buf, &v).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("0,1,2\n"));
        assert_eq!(read_psd_csv(&buf[..]).unwrap(), v);
    }
}
