use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// A `len × width` row-major feature matrix.
///
/// Values are stored at `f32` precision. Features are computed in `f64`
/// and rounded once, which makes them insensitive to the last-bit noise of
/// rescaled inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeq {
    width: usize,
    data: Vec<f32>,
}

impl FeatureSeq {
    pub fn new(width: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || data.len() % width != 0 {
            return Err(Error::Shape {
                what: "feature data length",
                expected: width.max(1) * (data.len() / width.max(1)),
                got: data.len(),
            });
        }
        Ok(Self { width, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let width = rows.first().map_or(0, |r| r.len());
        if let Some(bad) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::Shape {
                what: "feature row width",
                expected: width,
                got: bad.len(),
            });
        }
        let data = rows.iter().flatten().map(|&v| v as f32).collect();
        Self::new(width.max(1), data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of timesteps.
    pub fn len(&self) -> usize {
        self.data.len() / self.width
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.width..(t + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.width)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Values widened to `f64`, row-major.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.rows().map(|r| r[c] as f64).collect()
    }
}

fn l2_norm(values: impl Iterator<Item = f64>) -> f64 {
    values.map(|v| v * v).sum::<f64>().sqrt()
}

/// Per-sample `[amplitude, phase]` with the amplitude vector L2-normalized
/// over the frame and the phase `atan2(Q, I) / π` in `[-1, 1]`.
pub fn to_amp_phase(samples: &[Complex64]) -> Result<FeatureSeq> {
    let amps: Vec<f64> = samples.iter().map(|s| s.norm()).collect();
    let norm = l2_norm(amps.iter().copied());
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Degenerate(
            "amplitude L2 norm is zero or undefined".into(),
        ));
    }
    let data = samples
        .iter()
        .zip(&amps)
        .flat_map(|(s, a)| [(a / norm) as f32, (s.im.atan2(s.re) / PI) as f32])
        .collect();
    FeatureSeq::new(2, data)
}

/// Per-sample `[I, Q]` divided by the frame's L2 norm (the raw-sample
/// baseline representation).
pub fn to_iq_normalized(samples: &[Complex64]) -> Result<FeatureSeq> {
    let norm = l2_norm(samples.iter().map(|s| s.norm()));
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Degenerate("frame L2 norm is zero or undefined".into()));
    }
    let data = samples
        .iter()
        .flat_map(|s| [(s.re / norm) as f32, (s.im / norm) as f32])
        .collect();
    FeatureSeq::new(2, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frame(seed: u64, n: usize) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
            .collect()
    }

    #[test]
    fn unit_circle_points() {
        let f = to_amp_phase(&[Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)]).unwrap();
        let h = (0.5f64).sqrt() as f32;
        assert_eq!(f.row(0), &[h, 0.0]);
        assert_eq!(f.row(1), &[h, 0.5]);
    }

    #[test]
    fn zero_frame_is_degenerate() {
        let z = vec![Complex64::new(0.0, 0.0); 16];
        assert!(matches!(to_amp_phase(&z), Err(Error::Degenerate(_))));
        assert!(matches!(to_amp_phase(&[]), Err(Error::Degenerate(_))));
        assert!(matches!(to_iq_normalized(&z), Err(Error::Degenerate(_))));
    }

    #[test]
    fn reconstructs_iq() {
        // Oracle: A·cos(πp), A·sin(πp) with the raw amplitudes.
        let x = random_frame(1, 300);
        let f = to_amp_phase(&x).unwrap();
        for (s, row) in x.iter().zip(f.rows()) {
            let a = s.norm();
            let p = row[1] as f64;
            let re = a * (PI * p).cos();
            let im = a * (PI * p).sin();
            assert!((re - s.re).abs() < 1e-6, "{re} vs {}", s.re);
            assert!((im - s.im).abs() < 1e-6);
        }
    }

    #[test]
    fn phase_endpoints() {
        let f = to_amp_phase(&[Complex64::new(-1.0, 0.0), Complex64::new(-1.0, -0.0)]).unwrap();
        assert_eq!(f.row(0)[1], 1.0);
        assert_eq!(f.row(1)[1], -1.0);
    }

    #[test]
    fn shape_errors() {
        assert!(FeatureSeq::new(2, vec![0.0; 3]).is_err());
        assert!(FeatureSeq::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        let f = FeatureSeq::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!(f.column(1), vec![2.0, 4.0]);
    }

    proptest! {
        #[test]
        fn amplitude_is_unit_l2_and_phase_bounded(seed in any::<u64>(), n in 1usize..600) {
            let x = random_frame(seed, n);
            let f = to_amp_phase(&x).unwrap();
            let s: f64 = f.column(0).iter().map(|a| a * a).sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
            prop_assert!(f.column(1).iter().all(|p| (-1.0..=1.0).contains(p)));
        }

        #[test]
        fn positive_scaling_leaves_features_unchanged(seed in any::<u64>(), k in 0.01f64..100.0) {
            let x = random_frame(seed, 128);
            let scaled: Vec<Complex64> = x.iter().map(|s| s * k).collect();
            prop_assert_eq!(to_amp_phase(&x).unwrap(), to_amp_phase(&scaled).unwrap());
        }
    }
}
