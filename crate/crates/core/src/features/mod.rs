//! Classifier input representations: per-sample amplitude/phase, raw
//! normalized I/Q, and averaged magnitude spectra from sequential scanning.

mod amp_phase;
mod spectrum;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use amp_phase::{to_amp_phase, to_iq_normalized, FeatureSeq};
pub use spectrum::{
    averaged_magnitude_fft, psd_features, read_psd_csv, sequential_scan, write_psd_csv, PsdVector,
    ScanConfig, SpectrumAverager,
};

/// Which representation a classifier consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    /// L2-normalized amplitude and phase/π, two values per timestep.
    AmpPhase,
    /// I and Q divided by the frame's L2 norm, two values per timestep.
    Iq,
    /// Max-normalized averaged magnitude spectrum, one bin per timestep.
    Psd { scan: ScanConfig },
}

impl FeatureKind {
    pub fn input_dim(&self) -> usize {
        match self {
            FeatureKind::AmpPhase | FeatureKind::Iq => 2,
            FeatureKind::Psd { .. } => 1,
        }
    }

    pub fn extract(&self, samples: &[Complex64]) -> Result<FeatureSeq> {
        match self {
            FeatureKind::AmpPhase => to_amp_phase(samples),
            FeatureKind::Iq => to_iq_normalized(samples),
            FeatureKind::Psd { scan } => psd_features(&sequential_scan(samples, scan)?),
        }
    }
}
