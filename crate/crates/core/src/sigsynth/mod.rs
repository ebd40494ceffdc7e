//! Synthesis of labeled complex-baseband frames with channel impairments.
//!
//! The pipeline is `modulate` (clean, unit-power frame) followed by
//! `apply_channel` (fading, sample-rate offset, carrier offset, AWGN), and
//! `generate_dataset` assembles balanced, reproducible datasets of both.

mod channel;
mod dataset;
mod modulate;
mod pulse;

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use channel::{apply_channel, ChannelConfig, FadingProfile, FadingTap, Impairments};
pub use dataset::{
    generate_dataset, generate_frame, Dataset, DatasetSpec, ImpairmentProfile, Record, Split,
};
pub use modulate::{
    map_symbols, modulate, modulate_with, normalize_power, shape_symbols, ModulatorConfig,
};
pub use pulse::{gaussian_taps, rrc_taps, PulseShape};

/// The eleven modulation classes. Discriminants are the class labels, in
/// alphabetical order of the scheme names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModulationScheme {
    #[serde(rename = "8PSK")]
    Psk8 = 0,
    #[serde(rename = "AM-DSB")]
    AmDsb = 1,
    #[serde(rename = "AM-SSB")]
    AmSsb = 2,
    #[serde(rename = "BPSK")]
    Bpsk = 3,
    #[serde(rename = "CPFSK")]
    Cpfsk = 4,
    #[serde(rename = "GFSK")]
    Gfsk = 5,
    #[serde(rename = "PAM4")]
    Pam4 = 6,
    #[serde(rename = "QAM16")]
    Qam16 = 7,
    #[serde(rename = "QAM64")]
    Qam64 = 8,
    #[serde(rename = "QPSK")]
    Qpsk = 9,
    #[serde(rename = "WBFM")]
    Wbfm = 10,
}

impl ModulationScheme {
    pub const ALL: [ModulationScheme; 11] = [
        ModulationScheme::Psk8,
        ModulationScheme::AmDsb,
        ModulationScheme::AmSsb,
        ModulationScheme::Bpsk,
        ModulationScheme::Cpfsk,
        ModulationScheme::Gfsk,
        ModulationScheme::Pam4,
        ModulationScheme::Qam16,
        ModulationScheme::Qam64,
        ModulationScheme::Qpsk,
        ModulationScheme::Wbfm,
    ];

    pub fn label(self) -> usize {
        self as usize
    }

    pub fn from_label(label: usize) -> Option<Self> {
        Self::ALL.get(label).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ModulationScheme::Psk8 => "8PSK",
            ModulationScheme::AmDsb => "AM-DSB",
            ModulationScheme::AmSsb => "AM-SSB",
            ModulationScheme::Bpsk => "BPSK",
            ModulationScheme::Cpfsk => "CPFSK",
            ModulationScheme::Gfsk => "GFSK",
            ModulationScheme::Pam4 => "PAM4",
            ModulationScheme::Qam16 => "QAM16",
            ModulationScheme::Qam64 => "QAM64",
            ModulationScheme::Qpsk => "QPSK",
            ModulationScheme::Wbfm => "WBFM",
        }
    }

    /// Analog schemes modulate a synthetic audio source instead of symbols.
    pub fn is_analog(self) -> bool {
        matches!(
            self,
            ModulationScheme::AmDsb | ModulationScheme::AmSsb | ModulationScheme::Wbfm
        )
    }

    /// Constellation size for the linearly modulated schemes.
    pub fn constellation_size(self) -> Option<usize> {
        match self {
            ModulationScheme::Bpsk => Some(2),
            ModulationScheme::Qpsk => Some(4),
            ModulationScheme::Psk8 => Some(8),
            ModulationScheme::Pam4 => Some(4),
            ModulationScheme::Qam16 => Some(16),
            ModulationScheme::Qam64 => Some(64),
            _ => None,
        }
    }
}

impl fmt::Display for ModulationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModulationScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().to_ascii_uppercase().replace('_', "-");
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.name() == wanted)
            .ok_or_else(|| Error::config(format!("unknown modulation scheme '{s}'")))
    }
}

/// A complex baseband frame with its label and generation metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct IQFrame {
    pub samples: Vec<Complex64>,
    pub label: ModulationScheme,
    /// `None` for a clean frame that has not passed through AWGN.
    pub snr_db: Option<f64>,
    pub sps: usize,
    /// Channel applied to this frame, if any.
    pub channel: Option<ChannelConfig>,
}

impl IQFrame {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean_power(&self) -> f64 {
        mean_power(&self.samples)
    }

    /// Returns a copy with every sample multiplied by `k`.
    pub fn scaled(&self, k: f64) -> IQFrame {
        IQFrame {
            samples: self.samples.iter().map(|s| s * k).collect(),
            ..self.clone()
        }
    }
}

pub fn mean_power(samples: &[Complex64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64
}

/// SplitMix64 finalizer, used to derive independent per-frame seeds.
pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `parts` into `base` so that every distinct index tuple yields an
/// unrelated seed.
pub(crate) fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}
