use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sigsynth::Dataset;

use super::ClassifierConfig;

/// A labelled feature sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// Row-major, `input_dim` values per step.
    pub features: Vec<f64>,
    pub steps: usize,
    pub label: usize,
    pub snr_db: f64,
}

/// Feature sequences ready for training or evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleSet {
    pub input_dim: usize,
    pub classes: usize,
    pub examples: Vec<Example>,
    pub dataset_digest: Option<String>,
}

impl ExampleSet {
    /// Extracts `cfg.feature` from the dataset records at `indices`. Records
    /// whose scheme is not one of `cfg.classes` are skipped.
    pub fn from_dataset(ds: &Dataset, indices: &[usize], cfg: &ClassifierConfig) -> Result<Self> {
        cfg.validate()?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= ds.len()) {
            return Err(Error::Index {
                index: bad,
                len: ds.len(),
            });
        }
        let examples = indices
            .par_iter()
            .filter_map(|&i| {
                let r = &ds.records[i];
                let label = cfg.class_index(r.scheme)?;
                Some(cfg.feature.extract(&r.samples_f64()).map(|f| Example {
                    steps: f.len(),
                    features: f.to_f64(),
                    label,
                    snr_db: r.snr_db,
                }))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            input_dim: cfg.input_dim(),
            classes: cfg.classes.len(),
            examples,
            dataset_digest: Some(ds.digest()),
        })
    }

    /// All records of the dataset.
    pub fn from_all(ds: &Dataset, cfg: &ClassifierConfig) -> Result<Self> {
        let all: Vec<usize> = (0..ds.len()).collect();
        Self::from_dataset(ds, &all, cfg)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Examples satisfying `keep`, preserving order.
    pub fn filtered(&self, keep: impl Fn(&Example) -> bool) -> ExampleSet {
        ExampleSet {
            input_dim: self.input_dim,
            classes: self.classes,
            examples: self.examples.iter().filter(|e| keep(e)).cloned().collect(),
            dataset_digest: self.dataset_digest.clone(),
        }
    }
}
