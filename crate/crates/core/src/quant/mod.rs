//! Post-training weight and activation quantization of trained
//! classifiers, quantized inference and storage accounting.

mod checkpoint;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSeq;
use crate::model::{ClassifierConfig, TrainedModel};
use crate::nncore::{
    lstm_forward_with, param_count, softmax, ActivationMap, Architecture, Exact, Gate, Network,
    NoObserver, StepObserver,
};

pub use checkpoint::QUANT_FORMAT;

/// Default ternary threshold as a fraction of the mean absolute weight.
pub const TERNARY_THRESHOLD: f64 = 0.7;
/// Cell-state clip applied before `tanh` under 4-bit activations.
pub const CELL_CLIP: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuantScheme {
    #[serde(rename = "FULL")]
    Full,
    /// Ternary weights, full-precision activations.
    #[serde(rename = "TW_FA")]
    TwFa,
    /// Ternary weights, 4-bit activations.
    #[serde(rename = "TW_4BA")]
    Tw4ba,
    /// Binary weights and binary activations.
    #[serde(rename = "BIN")]
    Bin,
}

impl QuantScheme {
    pub const ALL: [QuantScheme; 4] = [
        QuantScheme::Full,
        QuantScheme::TwFa,
        QuantScheme::Tw4ba,
        QuantScheme::Bin,
    ];

    pub fn bits_per_weight(self) -> usize {
        match self {
            QuantScheme::Full => 32,
            QuantScheme::TwFa | QuantScheme::Tw4ba => 2,
            QuantScheme::Bin => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            QuantScheme::Full => "FULL",
            QuantScheme::TwFa => "TW_FA",
            QuantScheme::Tw4ba => "TW_4BA",
            QuantScheme::Bin => "BIN",
        }
    }
}

impl fmt::Display for QuantScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QuantScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        QuantScheme::ALL
            .into_iter()
            .find(|q| q.name() == norm)
            .ok_or_else(|| Error::config(format!("unknown quantization scheme {s:?}")))
    }
}

/// `T = sign(W)·1[|W| > Δ]` with `Δ = factor·mean|W|`, and `α` the mean
/// magnitude of the surviving weights (1 if none survive).
pub fn ternarize_with(w: &[f64], factor: f64) -> (Vec<i8>, f64) {
    if w.is_empty() {
        return (Vec::new(), 1.0);
    }
    let mean_abs = w.iter().map(|v| v.abs()).sum::<f64>() / w.len() as f64;
    let delta = factor * mean_abs;
    let mut sum = 0.0;
    let mut n = 0usize;
    let t = w
        .iter()
        .map(|&v| {
            if v.abs() > delta {
                sum += v.abs();
                n += 1;
                if v > 0.0 {
                    1
                } else {
                    -1
                }
            } else {
                0
            }
        })
        .collect();
    (t, if n == 0 { 1.0 } else { sum / n as f64 })
}

pub fn ternarize(w: &[f64]) -> (Vec<i8>, f64) {
    ternarize_with(w, TERNARY_THRESHOLD)
}

/// `B = sign(W)` (zero maps to +1) with `α = mean|W|` (1 for an all-zero
/// tensor).
pub fn binarize(w: &[f64]) -> (Vec<i8>, f64) {
    let b = w.iter().map(|&v| if v < 0.0 { -1 } else { 1 }).collect();
    let mean_abs = w.iter().map(|v| v.abs()).sum::<f64>() / w.len().max(1) as f64;
    (b, if mean_abs > 0.0 { mean_abs } else { 1.0 })
}

/// Sixteen evenly spaced levels `−1 + 2k/15`, `k = 0..15`, including both
/// endpoints; inputs are clamped to `[−1, 1]` first.
pub fn quantize_act_4bit(x: f64) -> f64 {
    let x = x.clamp(-1.0, 1.0);
    ((x + 1.0) * 7.5).round() / 7.5 - 1.0
}

/// 4-bit activations: every gate, `c_in`, `tanh(c)` and `h` quantized, the
/// cell state clipped to `[−CELL_CLIP, CELL_CLIP]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct FourBit;

impl ActivationMap for FourBit {
    fn gate(&self, v: f64) -> f64 {
        quantize_act_4bit(v)
    }
    fn candidate(&self, v: f64) -> f64 {
        quantize_act_4bit(v)
    }
    fn cell(&self, c: f64) -> f64 {
        c.clamp(-CELL_CLIP, CELL_CLIP)
    }
    fn cell_tanh(&self, v: f64) -> f64 {
        quantize_act_4bit(v)
    }
    fn hidden(&self, v: f64) -> f64 {
        quantize_act_4bit(v)
    }
}

/// Binary activations: gates become 0/1 (threshold ½), `c_in` and
/// `tanh(c)` their sign, so `h ∈ {−1, 0, 1}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Binary;

fn sign1(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

impl ActivationMap for Binary {
    fn gate(&self, v: f64) -> f64 {
        if v >= 0.5 {
            1.0
        } else {
            0.0
        }
    }
    fn candidate(&self, v: f64) -> f64 {
        sign1(v)
    }
    fn cell(&self, c: f64) -> f64 {
        c.clamp(-CELL_CLIP, CELL_CLIP)
    }
    fn cell_tanh(&self, v: f64) -> f64 {
        sign1(v)
    }
}

/// One quantized weight matrix in conventional row-major layout.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Entries in `{−1, 0, +1}` (ternary) or `{−1, +1}` (binary).
    pub codes: Vec<i8>,
    pub alpha: f64,
}

impl QuantTensor {
    pub fn dequantized(&self) -> Vec<f64> {
        self.codes.iter().map(|&t| self.alpha * t as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel {
    pub scheme: QuantScheme,
    pub config: ClassifierConfig,
    /// Empty for `FULL`. Otherwise, per layer `W_x` for gates i, f, o, c
    /// then `W_h` for the same gates, then the dense weights.
    pub tensors: Vec<QuantTensor>,
    /// Parameters used at inference: the original network for `FULL`,
    /// `α·T` weights with full-precision biases otherwise.
    pub network: Network,
}

fn tensor_names(arch: &Architecture) -> Vec<(String, usize, usize)> {
    let mut out = Vec::new();
    for l in 0..arch.depth {
        let inp = arch.layer_input_dim(l);
        for g in Gate::ALL {
            out.push((format!("layer{l}.W_x{}", g.symbol()), arch.cells, inp));
        }
        for g in Gate::ALL {
            out.push((format!("layer{l}.W_h{}", g.symbol()), arch.cells, arch.cells));
        }
    }
    out.push(("dense.W".into(), arch.classes, arch.cells));
    out
}

/// Weight matrices of `net` in [`QuantizedModel::tensors`] order.
fn weight_matrices(net: &Network) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for l in &net.layers {
        for g in Gate::ALL {
            out.push(l.gate_w_x(g));
        }
        for g in Gate::ALL {
            out.push(l.gate_w_h(g));
        }
    }
    out.push(net.dense.weights().to_vec());
    out
}

/// Network with the given weight matrices and the biases of `biases_from`.
fn assemble(biases_from: &Network, mats: &[Vec<f64>]) -> Network {
    let mut net = biases_from.clone();
    let mut it = mats.iter();
    for l in &mut net.layers {
        for g in Gate::ALL {
            l.set_gate_w_x(g, it.next().unwrap());
        }
        for g in Gate::ALL {
            l.set_gate_w_h(g, it.next().unwrap());
        }
    }
    net.dense.weights_mut().copy_from_slice(it.next().unwrap());
    net
}

impl QuantizedModel {
    pub(crate) fn from_tensors(
        scheme: QuantScheme,
        config: ClassifierConfig,
        tensors: Vec<QuantTensor>,
        biases_from: &Network,
    ) -> Self {
        let mats: Vec<Vec<f64>> = tensors.iter().map(QuantTensor::dequantized).collect();
        let network = assemble(biases_from, &mats);
        Self {
            scheme,
            config,
            tensors,
            network,
        }
    }

    /// Class probabilities.
    pub fn predict(&self, seq: &FeatureSeq) -> Result<Vec<f64>> {
        quantized_forward(self, seq)
    }

    pub fn predict_values(&self, seq: &[f64]) -> Result<Vec<f64>> {
        self.forward_observed(seq, &mut NoObserver)
    }

    /// Forward pass reporting every step's (quantized) signals.
    pub fn forward_observed<O: StepObserver>(&self, seq: &[f64], obs: &mut O) -> Result<Vec<f64>> {
        let trace = match self.scheme {
            QuantScheme::Full | QuantScheme::TwFa => {
                lstm_forward_with(&self.network, seq, &Exact, None, obs)?
            }
            QuantScheme::Tw4ba => lstm_forward_with(&self.network, seq, &FourBit, None, obs)?,
            QuantScheme::Bin => lstm_forward_with(&self.network, seq, &Binary, None, obs)?,
        };
        Ok(softmax(&self.network.dense.logits(&trace.output)))
    }
}

pub fn quantize(model: &TrainedModel, scheme: QuantScheme) -> Result<QuantizedModel> {
    quantize_with(model, scheme, TERNARY_THRESHOLD)
}

/// As [`quantize`] with an explicit ternary threshold factor.
pub fn quantize_with(model: &TrainedModel, scheme: QuantScheme, factor: f64) -> Result<QuantizedModel> {
    if !(factor >= 0.0 && factor.is_finite()) {
        return Err(Error::config(format!("ternary threshold factor {factor} is invalid")));
    }
    if scheme == QuantScheme::Full {
        return Ok(QuantizedModel {
            scheme,
            config: model.config.clone(),
            tensors: Vec::new(),
            network: model.network.clone(),
        });
    }
    let arch = model.network.architecture();
    let tensors = tensor_names(&arch)
        .into_iter()
        .zip(weight_matrices(&model.network))
        .map(|((name, rows, cols), w)| {
            let (codes, alpha) = if scheme == QuantScheme::Bin {
                binarize(&w)
            } else {
                ternarize_with(&w, factor)
            };
            QuantTensor {
                name,
                rows,
                cols,
                codes,
                alpha,
            }
        })
        .collect();
    Ok(QuantizedModel::from_tensors(
        scheme,
        model.config.clone(),
        tensors,
        &model.network,
    ))
}

/// Probabilities from the quantized recursion. For `FULL` this is exactly
/// [`TrainedModel::predict`].
pub fn quantized_forward(q: &QuantizedModel, seq: &FeatureSeq) -> Result<Vec<f64>> {
    if seq.width() != q.config.input_dim() {
        return Err(Error::Shape {
            what: "feature width",
            expected: q.config.input_dim(),
            got: seq.width(),
        });
    }
    q.predict_values(&seq.to_f64())
}

/// Storage and compute accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Footprint {
    /// All scalar parameters, biases included.
    pub weight_count: usize,
    pub bits_per_weight: usize,
    /// `weight_count × bits_per_weight`.
    pub weight_bits: usize,
    /// 32 bits per quantized tensor scale `α`.
    pub scale_bits: usize,
    pub bits_total: usize,
    /// Multiplications per timestep in the LSTM layers.
    pub macs_per_timestep: usize,
}

pub fn footprint_for(arch: &Architecture, scheme: QuantScheme) -> Result<Footprint> {
    let weight_count = param_count(arch)?;
    let bpw = scheme.bits_per_weight();
    let scales = if scheme == QuantScheme::Full {
        0
    } else {
        tensor_names(arch).len()
    };
    let weight_bits = weight_count * bpw;
    Ok(Footprint {
        weight_count,
        bits_per_weight: bpw,
        weight_bits,
        scale_bits: 32 * scales,
        bits_total: weight_bits + 32 * scales,
        macs_per_timestep: macs_per_timestep(arch),
    })
}

pub fn footprint(q: &QuantizedModel) -> Footprint {
    footprint_for(&q.network.architecture(), q.scheme).expect("model architecture is valid")
}

/// `Σ_layers 4·cells·(input_dim + cells)`.
pub fn macs_per_timestep(arch: &Architecture) -> usize {
    (0..arch.depth)
        .map(|l| 4 * arch.cells * (arch.layer_input_dim(l) + arch.cells))
        .sum()
}
