//! A small fixed-graph neural engine: stacked LSTM layers followed by a
//! dense softmax head, with exact backpropagation through time.
//!
//! # Parameter layout
//!
//! Internally the LSTM weights are stored input-major (`W_xᵀ`, `W_hᵀ`, one
//! row of `4 * cells` pre-activations per input) so that the forward pass
//! accumulates each pre-activation in a fixed order while vectorizing across
//! gates. The *canonical* order used for initialization and checkpoints is
//! the conventional one: per layer, for each gate in `i, f, o, c` the
//! `cells × input_dim` matrix `W_x·` row-major, then for each gate the
//! `cells × cells` matrix `W_h·`, then for each gate the bias vector; after
//! all layers the dense `classes × cells` weights row-major and the dense
//! bias.

mod dropout;
mod init;
mod loss;
mod lstm;
mod optim;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dropout::{dropout, DropoutMasks};
pub use init::init_params;
pub use loss::{argmax, softmax, softmax_cross_entropy};
pub use lstm::{
    bptt, example_gradient, lstm_cell_step, lstm_forward, lstm_forward_with, ActivationMap,
    CellState, Exact, ForwardTrace, LayerTrace, NoObserver, StepObserver, StepView,
};
pub use optim::{adam_update, AdamConfig, AdamState};

/// LSTM gates in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Output = 2,
    /// The candidate (input transform) `c_in`.
    Cell = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Cell];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Gate::Input => "i",
            Gate::Forget => "f",
            Gate::Output => "o",
            Gate::Cell => "c",
        }
    }
}

/// Network shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub cells: usize,
    pub depth: usize,
    pub classes: usize,
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("input_dim must be positive"));
        }
        if self.cells == 0 {
            return Err(Error::config("an LSTM layer needs at least one cell"));
        }
        if self.depth == 0 {
            return Err(Error::config("network needs at least one LSTM layer"));
        }
        if self.classes < 2 {
            return Err(Error::config("classifier needs at least two classes"));
        }
        Ok(())
    }

    pub fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            self.cells
        }
    }
}

/// Total scalar parameters: per layer `4·(cells·(in + cells) + cells)`,
/// plus `cells·K + K` for the dense head.
pub fn param_count(arch: &Architecture) -> Result<usize> {
    arch.validate()?;
    let c = arch.cells;
    let lstm: usize = (0..arch.depth)
        .map(|l| 4 * (c * (arch.layer_input_dim(l) + c) + c))
        .sum();
    Ok(lstm + c * arch.classes + arch.classes)
}

/// Weights and biases of one LSTM layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    input_dim: usize,
    cells: usize,
    /// `input_dim × 4·cells`, input-major.
    pub(crate) w_x: Vec<f64>,
    /// `cells × 4·cells`, input-major.
    pub(crate) w_h: Vec<f64>,
    /// `4·cells`, gate-major.
    pub(crate) b: Vec<f64>,
}

impl LstmLayerParams {
    pub fn zeros(input_dim: usize, cells: usize) -> Self {
        Self {
            input_dim,
            cells,
            w_x: vec![0.0; input_dim * 4 * cells],
            w_h: vec![0.0; cells * 4 * cells],
            b: vec![0.0; 4 * cells],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Element `W_x{gate}[cell][input]`.
    pub fn w_x(&self, gate: Gate, cell: usize, input: usize) -> f64 {
        self.w_x[input * 4 * self.cells + gate.index() * self.cells + cell]
    }

    pub fn set_w_x(&mut self, gate: Gate, cell: usize, input: usize, v: f64) {
        let k = input * 4 * self.cells + gate.index() * self.cells + cell;
        self.w_x[k] = v;
    }

    /// Element `W_h{gate}[cell][from]`.
    pub fn w_h(&self, gate: Gate, cell: usize, from: usize) -> f64 {
        self.w_h[from * 4 * self.cells + gate.index() * self.cells + cell]
    }

    pub fn set_w_h(&mut self, gate: Gate, cell: usize, from: usize, v: f64) {
        let k = from * 4 * self.cells + gate.index() * self.cells + cell;
        self.w_h[k] = v;
    }

    pub fn bias(&self, gate: Gate) -> &[f64] {
        &self.b[gate.index() * self.cells..(gate.index() + 1) * self.cells]
    }

    pub fn bias_mut(&mut self, gate: Gate) -> &mut [f64] {
        let c = self.cells;
        &mut self.b[gate.index() * c..(gate.index() + 1) * c]
    }

    /// `W_x{gate}` as a `cells × input_dim` row-major matrix.
    pub fn gate_w_x(&self, gate: Gate) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.cells * self.input_dim);
        for cell in 0..self.cells {
            for j in 0..self.input_dim {
                out.push(self.w_x(gate, cell, j));
            }
        }
        out
    }

    pub fn set_gate_w_x(&mut self, gate: Gate, values: &[f64]) {
        debug_assert_eq!(values.len(), self.cells * self.input_dim);
        for cell in 0..self.cells {
            for j in 0..self.input_dim {
                self.set_w_x(gate, cell, j, values[cell * self.input_dim + j]);
            }
        }
    }

    /// `W_h{gate}` as a `cells × cells` row-major matrix.
    pub fn gate_w_h(&self, gate: Gate) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.cells * self.cells);
        for cell in 0..self.cells {
            for k in 0..self.cells {
                out.push(self.w_h(gate, cell, k));
            }
        }
        out
    }

    pub fn set_gate_w_h(&mut self, gate: Gate, values: &[f64]) {
        debug_assert_eq!(values.len(), self.cells * self.cells);
        for cell in 0..self.cells {
            for k in 0..self.cells {
                self.set_w_h(gate, cell, k, values[cell * self.cells + k]);
            }
        }
    }
}

/// Fully connected output layer, `classes × inputs` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    inputs: usize,
    classes: usize,
    pub(crate) w: Vec<f64>,
    pub(crate) b: Vec<f64>,
}

impl DenseParams {
    pub fn zeros(inputs: usize, classes: usize) -> Self {
        Self {
            inputs,
            classes,
            w: vec![0.0; inputs * classes],
            b: vec![0.0; classes],
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.w
    }

    pub fn bias(&self) -> &[f64] {
        &self.b
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.b
    }

    pub fn logits(&self, h: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|k| {
                let row = &self.w[k * self.inputs..(k + 1) * self.inputs];
                self.b[k] + row.iter().zip(h).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect()
    }
}

/// Stacked LSTM layers plus the dense head. Also used as the container for
/// gradients and optimizer moments, which share its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<LstmLayerParams>,
    pub dense: DenseParams,
}

impl Network {
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        Ok(Self {
            layers: (0..arch.depth)
                .map(|l| LstmLayerParams::zeros(arch.layer_input_dim(l), arch.cells))
                .collect(),
            dense: DenseParams::zeros(arch.cells, arch.classes),
        })
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_dim: self.layers[0].input_dim,
            cells: self.layers[0].cells,
            depth: self.layers.len(),
            classes: self.dense.classes,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Network::zeros(&self.architecture()).expect("valid architecture")
    }

    /// Flat views of every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(3 * self.layers.len() + 2);
        for l in &self.layers {
            out.push(&l.w_x);
            out.push(&l.w_h);
            out.push(&l.b);
        }
        out.push(&self.dense.w);
        out.push(&self.dense.b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(3 * self.layers.len() + 2);
        for l in &mut self.layers {
            out.push(&mut l.w_x);
            out.push(&mut l.w_h);
            out.push(&mut l.b);
        }
        out.push(&mut self.dense.w);
        out.push(&mut self.dense.b);
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn same_shape(&self, other: &Network) -> bool {
        self.architecture() == other.architecture()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// `self += k * other`.
    pub fn add_scaled(&mut self, other: &Network, k: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += k * y);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= k);
        }
    }

    /// Rounds every parameter to the nearest `f32`, making the network
    /// exactly representable in a checkpoint.
    pub fn round_to_f32(&mut self) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x = *x as f32 as f64);
        }
    }

    /// Parameters in canonical checkpoint order (see module docs).
    pub fn canonical_values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            for g in Gate::ALL {
                out.extend(l.gate_w_x(g));
            }
            for g in Gate::ALL {
                out.extend(l.gate_w_h(g));
            }
            for g in Gate::ALL {
                out.extend_from_slice(l.bias(g));
            }
        }
        out.extend_from_slice(&self.dense.w);
        out.extend_from_slice(&self.dense.b);
        out
    }

    pub fn from_canonical(arch: &Architecture, values: &[f64]) -> Result<Self> {
        let expected = param_count(arch)?;
        if values.len() != expected {
            return Err(Error::Shape {
                what: "canonical parameter vector",
                expected,
                got: values.len(),
            });
        }
        let mut net = Network::zeros(arch)?;
        let mut pos = 0;
        let mut take = |n: usize| {
            let s = &values[pos..pos + n];
            pos += n;
            s
        };
        for l in &mut net.layers {
            let (inp, c) = (l.input_dim, l.cells);
            for g in Gate::ALL {
                l.set_gate_w_x(g, take(c * inp));
            }
            for g in Gate::ALL {
                l.set_gate_w_h(g, take(c * c));
            }
            for g in Gate::ALL {
                l.bias_mut(g).copy_from_slice(take(c));
            }
        }
        let (k, c) = (arch.classes, arch.cells);
        net.dense.w.copy_from_slice(take(k * c));
        net.dense.b.copy_from_slice(take(k));
        Ok(net)
    }

    /// Canonical parameters as little-endian `f32`.
    pub fn to_f32_le(&self) -> Vec<u8> {
        self.canonical_values()
            .iter()
            .flat_map(|&v| (v as f32).to_le_bytes())
            .collect()
    }

    pub fn from_f32_le(arch: &Architecture, bytes: &[u8]) -> Result<Self> {
        if bytes.len() % 4 != 0 {
            return Err(Error::format("parameter blob length is not a multiple of 4"));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        Network::from_canonical(arch, &values)
    }
}

#[cfg(test)]
mod gradcheck;

#[cfg(test)]
mod tests {
    use super::*;

    fn arch(depth: usize, cells: usize, input_dim: usize, classes: usize) -> Architecture {
        Architecture {
            input_dim,
            cells,
            depth,
            classes,
        }
    }

    #[test]
    fn param_count_matches_closed_form() {
        // 4·128·(2+128) + 4·128 = 67,072; 4·128·256 + 4·128 = 131,584;
        // 128·11 + 11 = 1,419.
        assert_eq!(param_count(&arch(2, 128, 2, 11)).unwrap(), 200_075);
        assert_eq!(param_count(&arch(1, 16, 2, 11)).unwrap(), 1_216 + 187);
        assert!(param_count(&arch(1, 0, 2, 11)).is_err());
        assert!(param_count(&arch(0, 16, 2, 11)).is_err());
        assert!(param_count(&arch(1, 16, 2, 1)).is_err());
    }

    #[test]
    fn network_count_agrees_with_closed_form() {
        for (d, c, i, k) in [(1, 3, 2, 4), (2, 8, 2, 5), (3, 16, 1, 11)] {
            let a = arch(d, c, i, k);
            assert_eq!(Network::zeros(&a).unwrap().param_count(), param_count(&a).unwrap());
        }
    }

    #[test]
    fn canonical_layout_roundtrip() {
        let a = arch(2, 3, 2, 4);
        let n = param_count(&a).unwrap();
        let values: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let net = Network::from_canonical(&a, &values).unwrap();
        assert_eq!(net.canonical_values(), values);
        // First block is W_xi, cell 0 row.
        assert_eq!(net.layers[0].w_x(Gate::Input, 0, 0), 0.0);
        assert_eq!(net.layers[0].w_x(Gate::Input, 0, 1), 1.0);
        assert_eq!(net.layers[0].w_x(Gate::Input, 1, 0), 2.0);
        assert_eq!(net.layers[0].w_x(Gate::Forget, 0, 0), 6.0);
        // Then W_hi.
        assert_eq!(net.layers[0].w_h(Gate::Input, 0, 0), 24.0);
        // Forget bias follows the input-gate bias.
        let bias_start = 24 + 36;
        assert_eq!(net.layers[0].bias(Gate::Forget)[0], (bias_start + 3) as f64);
        assert!(Network::from_canonical(&a, &values[1..]).is_err());
    }

    #[test]
    fn f32_blob_roundtrip_is_exact_after_rounding() {
        let a = arch(2, 4, 2, 3);
        let mut net = init_params(&a, 9).unwrap();
        net.round_to_f32();
        let blob = net.to_f32_le();
        assert_eq!(blob.len(), 4 * net.param_count());
        let back = Network::from_f32_le(&a, &blob).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.to_f32_le(), blob);
        assert!(Network::from_f32_le(&a, &blob[..blob.len() - 2]).is_err());
    }
}
