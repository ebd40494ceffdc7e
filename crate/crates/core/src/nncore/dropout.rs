use rand::Rng;

use crate::error::{Error, Result};

use super::Architecture;

fn check_keep(keep_prob: f64) -> Result<()> {
    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
        return Err(Error::config(format!(
            "keep_prob must lie in (0, 1], got {keep_prob}"
        )));
    }
    Ok(())
}

fn mask_value<R: Rng + ?Sized>(keep_prob: f64, rng: &mut R) -> f64 {
    if rng.random::<f64>() < keep_prob {
        1.0 / keep_prob
    } else {
        0.0
    }
}

/// Inverted dropout: in training each entry is kept with probability
/// `keep_prob` and rescaled by `1/keep_prob`; at inference it is the
/// identity.
pub fn dropout<R: Rng + ?Sized>(
    v: &[f64],
    keep_prob: f64,
    rng: &mut R,
    training: bool,
) -> Result<Vec<f64>> {
    check_keep(keep_prob)?;
    if !training || keep_prob == 1.0 {
        return Ok(v.to_vec());
    }
    Ok(v.iter().map(|&x| x * mask_value(keep_prob, rng)).collect())
}

/// Pre-drawn dropout masks for every LSTM layer output at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    cells: usize,
    steps: usize,
    /// Per layer, `steps × cells` multipliers (0 or `1/keep_prob`).
    layers: Vec<Vec<f64>>,
}

impl DropoutMasks {
    pub fn sample<R: Rng + ?Sized>(
        arch: &Architecture,
        steps: usize,
        keep_prob: f64,
        rng: &mut R,
    ) -> Result<Self> {
        check_keep(keep_prob)?;
        let n = steps * arch.cells;
        let layers = (0..arch.depth)
            .map(|_| (0..n).map(|_| mask_value(keep_prob, rng)).collect())
            .collect();
        Ok(Self {
            cells: arch.cells,
            steps,
            layers,
        })
    }

    pub(crate) fn check(&self, arch: &Architecture, steps: usize) -> Result<()> {
        if self.cells != arch.cells || self.layers.len() != arch.depth || self.steps != steps {
            return Err(Error::Shape {
                what: "dropout mask (layers × steps × cells)",
                expected: arch.depth * steps * arch.cells,
                got: self.layers.len() * self.steps * self.cells,
            });
        }
        Ok(())
    }

    /// Multiplies a full `steps × cells` matrix by layer `l`'s mask.
    pub(crate) fn apply(&self, l: usize, v: &mut [f64]) {
        v.iter_mut().zip(&self.layers[l]).for_each(|(x, m)| *x *= m);
    }

    pub(crate) fn apply_step(&self, l: usize, t: usize, v: &mut [f64]) {
        let m = &self.layers[l][t * self.cells..(t + 1) * self.cells];
        v.iter_mut().zip(m).for_each(|(x, m)| *x *= m);
    }

    pub fn layer(&self, l: usize) -> &[f64] {
        &self.layers[l]
    }
}
