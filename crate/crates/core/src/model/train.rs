use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::{
    adam_update, argmax, example_gradient, init_params, AdamConfig, AdamState, DropoutMasks,
    Network,
};
use crate::sigsynth::derive_seed;

use super::{ClassifierConfig, ExampleSet, Provenance, TrainConfig, TrainedModel};

/// Examples per gradient block. Blocks are summed in order, so the result
/// does not depend on how many threads run them.
const BLOCK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Accuracy of the (dropout-perturbed) training forward passes.
    pub train_accuracy: f64,
}

/// Trains a fresh classifier. `progress` is called after every epoch.
pub fn train(
    set: &ExampleSet,
    cfg: &ClassifierConfig,
    tcfg: &TrainConfig,
    mut progress: impl FnMut(&EpochStats),
) -> Result<TrainedModel> {
    cfg.validate()?;
    tcfg.validate()?;
    if set.input_dim != cfg.input_dim() || set.classes != cfg.classes.len() {
        return Err(Error::config(format!(
            "examples have input_dim {} and {} classes, classifier expects {} and {}",
            set.input_dim,
            set.classes,
            cfg.input_dim(),
            cfg.classes.len()
        )));
    }

    let mut buckets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, e) in set.examples.iter().enumerate() {
        let snr_ok = tcfg.snr_min_train.is_none_or(|m| e.snr_db >= m);
        let len_ok = tcfg
            .length_buckets
            .as_ref()
            .is_none_or(|b| b.contains(&e.steps));
        if snr_ok && len_ok {
            buckets.entry(e.steps).or_default().push(i);
        }
    }
    let n_train: usize = buckets.values().map(Vec::len).sum();
    if n_train == 0 {
        return Err(Error::config(
            "no training examples left after SNR and length filtering",
        ));
    }

    let arch = cfg.architecture();
    let mut net = init_params(&arch, cfg.seed)?;
    let mut adam = AdamState::new(
        &net,
        AdamConfig {
            lr: tcfg.lr,
            ..AdamConfig::default()
        },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.shuffle_seed);
    let mut history = Vec::with_capacity(tcfg.epochs);

    for epoch in 0..tcfg.epochs {
        let mut batches: Vec<Vec<usize>> = Vec::new();
        for idx in buckets.values() {
            let mut idx = idx.clone();
            idx.shuffle(&mut rng);
            batches.extend(idx.chunks(tcfg.minibatch).map(<[usize]>::to_vec));
        }
        batches.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in &batches {
            let parts: Vec<(Network, f64, usize)> = batch
                .par_chunks(BLOCK)
                .map(|block| block_gradient(&net, set, cfg, tcfg, epoch, block))
                .collect::<Result<_>>()?;
            let mut grads = net.zeros_like();
            for (g, l, c) in &parts {
                grads.add_scaled(g, 1.0);
                loss_sum += l;
                correct += c;
            }
            grads.scale(1.0 / batch.len() as f64);
            if let Some(max) = tcfg.clip_norm {
                let norm = grads
                    .tensors()
                    .iter()
                    .flat_map(|t| t.iter())
                    .map(|g| g * g)
                    .sum::<f64>()
                    .sqrt();
                if norm > max {
                    grads.scale(max / norm);
                }
            }
            adam_update(&mut net, &grads, &mut adam)?;
        }
        if !net.is_finite() {
            return Err(Error::Degenerate(format!(
                "parameters became non-finite in epoch {epoch}"
            )));
        }
        let stats = EpochStats {
            epoch,
            mean_loss: loss_sum / n_train as f64,
            train_accuracy: correct as f64 / n_train as f64,
        };
        progress(&stats);
        history.push(stats);
    }

    net.round_to_f32();
    Ok(TrainedModel {
        config: cfg.clone(),
        train_config: tcfg.clone(),
        network: net,
        history,
        provenance: Provenance {
            dataset_digest: set.dataset_digest.clone(),
            init_seed: cfg.seed,
            shuffle_seed: tcfg.shuffle_seed,
            train_examples: n_train,
        },
    })
}

fn block_gradient(
    net: &Network,
    set: &ExampleSet,
    cfg: &ClassifierConfig,
    tcfg: &TrainConfig,
    epoch: usize,
    block: &[usize],
) -> Result<(Network, f64, usize)> {
    let arch = net.architecture();
    let mut grads = net.zeros_like();
    let mut loss = 0.0;
    let mut correct = 0;
    for &i in block {
        let e = &set.examples[i];
        let masks = if cfg.keep_prob < 1.0 {
            let seed = derive_seed(tcfg.shuffle_seed, &[epoch as u64, i as u64]);
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            Some(DropoutMasks::sample(&arch, e.steps, cfg.keep_prob, &mut r)?)
        } else {
            None
        };
        let (l, logits) = example_gradient(net, &e.features, e.label, masks.as_ref(), &mut grads)?;
        loss += l;
        correct += usize::from(argmax(&logits) == e.label);
    }
    Ok((grads, loss, correct))
}
