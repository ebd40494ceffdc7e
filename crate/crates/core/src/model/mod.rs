//! The stacked-LSTM modulation classifier: configuration, training with
//! length-bucketed minibatches, inference on sequences of any length,
//! evaluation and checkpoints.

mod checkpoint;
mod eval;
mod examples;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureSeq};
use crate::nncore::{lstm_forward, softmax, Architecture, Network};
use crate::sigsynth::ModulationScheme;

pub use checkpoint::{CheckpointManifest, CHECKPOINT_FORMAT};
pub use eval::{evaluate, evaluate_with, sweep, EvalReport, Outcome, SnrAccuracy, SweepRow};
pub use examples::{Example, ExampleSet};
pub use train::{train, EpochStats};

/// Network shape and input representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    pub depth: usize,
    pub cells: usize,
    pub feature: FeatureKind,
    /// Output classes in logit order.
    pub classes: Vec<ModulationScheme>,
    pub keep_prob: f64,
    /// Initialization seed.
    pub seed: u64,
}

impl ClassifierConfig {
    /// The 2×128 amplitude-phase model over all eleven schemes.
    pub fn full_scale() -> Self {
        Self {
            depth: 2,
            cells: 128,
            feature: FeatureKind::AmpPhase,
            classes: ModulationScheme::ALL.to_vec(),
            keep_prob: 0.8,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::config("depth must be at least 1"));
        }
        if self.cells == 0 {
            return Err(Error::config("cells must be at least 1"));
        }
        if self.classes.len() < 2 {
            return Err(Error::config("need at least two classes"));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if self.classes[..i].contains(c) {
                return Err(Error::config(format!("class {c} listed twice")));
            }
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(Error::config(format!(
                "keep_prob must lie in (0, 1], got {}",
                self.keep_prob
            )));
        }
        if let FeatureKind::Psd { scan } = &self.feature {
            scan.validate()?;
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.feature.input_dim()
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_dim: self.input_dim(),
            cells: self.cells,
            depth: self.depth,
            classes: self.classes.len(),
        }
    }

    pub fn class_index(&self, scheme: ModulationScheme) -> Option<usize> {
        self.classes.iter().position(|&c| c == scheme)
    }
}

/// Optimization protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub minibatch: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Training frames below this SNR are skipped; evaluation is unaffected.
    pub snr_min_train: Option<f64>,
    /// Restrict training to these sequence lengths; `None` uses every length
    /// present.
    pub length_buckets: Option<Vec<usize>>,
    /// Rescale the minibatch gradient to at most this global L2 norm.
    pub clip_norm: Option<f64>,
    /// Seed for shuffling and dropout masks.
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            minibatch: 400,
            epochs: 70,
            lr: 0.001,
            snr_min_train: Some(-10.0),
            length_buckets: None,
            clip_norm: None,
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.minibatch == 0 {
            return Err(Error::config("minibatch must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return Err(Error::config("clip_norm must be positive"));
        }
        if matches!(&self.length_buckets, Some(b) if b.is_empty()) {
            return Err(Error::config("length_buckets is empty"));
        }
        Ok(())
    }
}

/// Where a model came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset_digest: Option<String>,
    pub init_seed: u64,
    pub shuffle_seed: u64,
    pub train_examples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: ClassifierConfig,
    pub train_config: TrainConfig,
    /// Parameters; always exactly representable in `f32`.
    pub network: Network,
    pub history: Vec<EpochStats>,
    pub provenance: Provenance,
}

impl TrainedModel {
    /// Wraps untrained (or externally produced) parameters.
    pub fn from_network(config: ClassifierConfig, mut network: Network) -> Result<Self> {
        config.validate()?;
        if network.architecture() != config.architecture() {
            return Err(Error::config("network shape does not match classifier config"));
        }
        network.round_to_f32();
        Ok(Self {
            provenance: Provenance {
                dataset_digest: None,
                init_seed: config.seed,
                shuffle_seed: 0,
                train_examples: 0,
            },
            config,
            train_config: TrainConfig::default(),
            network,
            history: Vec::new(),
        })
    }

    pub fn classes(&self) -> usize {
        self.config.classes.len()
    }

    /// Class probabilities for a feature sequence of any length.
    pub fn predict(&self, seq: &FeatureSeq) -> Result<Vec<f64>> {
        self.check_width(seq)?;
        self.predict_values(&seq.to_f64())
    }

    /// As [`predict`](Self::predict) for a row-major `f64` sequence.
    pub fn predict_values(&self, seq: &[f64]) -> Result<Vec<f64>> {
        let trace = lstm_forward(&self.network, seq)?;
        Ok(softmax(&self.network.dense.logits(&trace.output)))
    }

    /// Extracts features from raw samples, then predicts.
    pub fn predict_samples(&self, samples: &[num_complex::Complex64]) -> Result<Vec<f64>> {
        self.predict(&self.config.feature.extract(samples)?)
    }

    pub(crate) fn check_width(&self, seq: &FeatureSeq) -> Result<()> {
        if seq.width() != self.config.input_dim() {
            return Err(Error::Shape {
                what: "feature width",
                expected: self.config.input_dim(),
                got: seq.width(),
            });
        }
        Ok(())
    }
}
