//! Introspection of trained models: per-cell activation traces, gate
//! saturation statistics and CSV report emission.

mod report;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureSeq};
use crate::model::TrainedModel;
use crate::nncore::{lstm_forward_with, Exact, NoObserver, StepObserver, StepView};

pub use report::{
    emit_report, parse_confusion_csv, parse_per_snr_csv, parse_saturation_csv, parse_trace_csv,
    CsvReport,
};

/// Saturation thresholds: a gate is left saturated below `left` and right
/// saturated above `right`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub left: f64,
    pub right: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            left: 0.1,
            right: 0.9,
        }
    }
}

/// The gates whose saturation is tracked.
pub const SAT_GATES: [&str; 3] = ["i", "f", "o"];

/// Per layer, per cell, per gate (i, f, o) fractions of timesteps spent
/// saturated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSaturation {
    pub thresholds: Thresholds,
    pub steps: usize,
    /// `layers[l][cell][gate] = (left_frac, right_frac)`.
    pub layers: Vec<Vec<[(f64, f64); 3]>>,
}

impl GateSaturation {
    pub fn get(&self, layer: usize, cell: usize, gate: usize) -> (f64, f64) {
        self.layers[layer][cell][gate]
    }

    /// Recomputes the fractions from recorded gate activations.
    pub fn from_trace(trace: &ActivationTrace, thresholds: Thresholds) -> Self {
        let mut counter = SaturationCounter::new(
            trace.layers.len(),
            trace.layers.first().map_or(0, |l| l.cells),
            thresholds,
        );
        for (l, layer) in trace.layers.iter().enumerate() {
            for t in 0..trace.steps {
                counter.count(l, layer.gates_at(t));
            }
        }
        counter.finish(trace.steps)
    }
}

/// Counts saturated steps online, as a forward-pass observer.
#[derive(Debug, Clone)]
pub struct SaturationCounter {
    thresholds: Thresholds,
    cells: usize,
    /// `[layer][cell·3 + gate] = (left, right)` counts.
    counts: Vec<Vec<(usize, usize)>>,
}

impl SaturationCounter {
    pub fn new(depth: usize, cells: usize, thresholds: Thresholds) -> Self {
        Self {
            thresholds,
            cells,
            counts: vec![vec![(0, 0); 3 * cells]; depth],
        }
    }

    /// `gates` holds at least the i, f, o blocks of `cells` values each.
    fn count(&mut self, layer: usize, gates: &[f64]) {
        let c = self.cells;
        for g in 0..3 {
            for k in 0..c {
                let v = gates[g * c + k];
                let e = &mut self.counts[layer][k * 3 + g];
                if v < self.thresholds.left {
                    e.0 += 1;
                } else if v > self.thresholds.right {
                    e.1 += 1;
                }
            }
        }
    }

    pub fn finish(self, steps: usize) -> GateSaturation {
        let n = steps.max(1) as f64;
        GateSaturation {
            thresholds: self.thresholds,
            steps,
            layers: self
                .counts
                .iter()
                .map(|layer| {
                    layer
                        .chunks_exact(3)
                        .map(|g| {
                            [
                                (g[0].0 as f64 / n, g[0].1 as f64 / n),
                                (g[1].0 as f64 / n, g[1].1 as f64 / n),
                                (g[2].0 as f64 / n, g[2].1 as f64 / n),
                            ]
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

impl StepObserver for SaturationCounter {
    fn on_step(&mut self, view: StepView<'_>) {
        self.count(view.layer, view.gates);
    }
}

/// Recorded activations of one layer, `steps × width` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLayer {
    pub cells: usize,
    /// `tanh(c_t)` per cell.
    pub tanh_c: Vec<f64>,
    /// Gate activations, `3·cells` per step in blocks i, f, o.
    pub gates: Vec<f64>,
}

impl TraceLayer {
    pub fn tanh_c_at(&self, t: usize) -> &[f64] {
        &self.tanh_c[t * self.cells..(t + 1) * self.cells]
    }

    pub fn gates_at(&self, t: usize) -> &[f64] {
        &self.gates[t * 3 * self.cells..(t + 1) * 3 * self.cells]
    }
}

/// Input rows plus per-layer temporal activations for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationTrace {
    pub steps: usize,
    pub input_names: Vec<String>,
    /// `steps × input_names.len()`.
    pub inputs: Vec<f64>,
    pub layers: Vec<TraceLayer>,
}

fn input_names(kind: &FeatureKind) -> Vec<String> {
    let names: &[&str] = match kind {
        FeatureKind::AmpPhase => &["amplitude", "phase"],
        FeatureKind::Iq => &["i", "q"],
        FeatureKind::Psd { .. } => &["psd"],
    };
    names.iter().map(|s| s.to_string()).collect()
}

fn check(model: &TrainedModel, seq: &FeatureSeq) -> Result<()> {
    if seq.is_empty() {
        return Err(Error::Degenerate("empty input sequence".into()));
    }
    if seq.width() != model.config.input_dim() {
        return Err(Error::Shape {
            what: "feature width",
            expected: model.config.input_dim(),
            got: seq.width(),
        });
    }
    Ok(())
}

/// Saturation fractions counted during an instrumented forward pass.
pub fn gate_saturation(model: &TrainedModel, seq: &FeatureSeq, thresholds: Thresholds) -> Result<GateSaturation> {
    check(model, seq)?;
    let arch = model.network.architecture();
    let mut counter = SaturationCounter::new(arch.depth, arch.cells, thresholds);
    lstm_forward_with(&model.network, &seq.to_f64(), &Exact, None, &mut counter)?;
    Ok(counter.finish(seq.len()))
}

/// Per-step `tanh(c)` and gate activations for every layer.
pub fn activation_trace(model: &TrainedModel, seq: &FeatureSeq) -> Result<ActivationTrace> {
    check(model, seq)?;
    let tr = lstm_forward_with(&model.network, &seq.to_f64(), &Exact, None, &mut NoObserver)?;
    let layers = tr
        .layers
        .iter()
        .map(|l| {
            let c = l.cells;
            let mut gates = Vec::with_capacity(l.steps() * 3 * c);
            for t in 0..l.steps() {
                gates.extend_from_slice(&l.gates_at(t)[..3 * c]);
            }
            TraceLayer {
                cells: c,
                tanh_c: l.tanh_c.clone(),
                gates,
            }
        })
        .collect();
    Ok(ActivationTrace {
        steps: seq.len(),
        input_names: input_names(&model.config.feature),
        inputs: seq.to_f64(),
        layers,
    })
}
