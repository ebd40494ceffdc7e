use crate::error::{Error, Result};

use super::dropout::DropoutMasks;
use super::loss::softmax_cross_entropy;
use super::{LstmLayerParams, Network};

/// Post-nonlinearity hooks used by the forward recursion. The identity
/// implementation ([`Exact`]) gives the plain LSTM; quantized inference
/// plugs in a map that clips and rounds each signal.
pub trait ActivationMap {
    /// Applied to `σ(·)` of the i, f and o gates.
    fn gate(&self, v: f64) -> f64 {
        v
    }
    /// Applied to the candidate `c_in = tanh(·)`.
    fn candidate(&self, v: f64) -> f64 {
        v
    }
    /// Applied to the updated memory `c` before it is stored.
    fn cell(&self, c: f64) -> f64 {
        c
    }
    /// Applied to `tanh(c)`.
    fn cell_tanh(&self, v: f64) -> f64 {
        v
    }
    /// Applied to `h = o·tanh(c)`.
    fn hidden(&self, v: f64) -> f64 {
        v
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Exact;

impl ActivationMap for Exact {}

/// Signals of one layer at one timestep, handed to a [`StepObserver`].
#[derive(Debug, Clone, Copy)]
pub struct StepView<'a> {
    pub layer: usize,
    pub t: usize,
    /// `4·cells` activated gates, blocks `i, f, o, c_in`.
    pub gates: &'a [f64],
    pub c: &'a [f64],
    pub tanh_c: &'a [f64],
    pub h: &'a [f64],
}

pub trait StepObserver {
    fn on_step(&mut self, view: StepView<'_>);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoObserver;

impl StepObserver for NoObserver {
    fn on_step(&mut self, _: StepView<'_>) {}
}

impl<F: FnMut(StepView<'_>)> StepObserver for F {
    fn on_step(&mut self, view: StepView<'_>) {
        self(view)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl CellState {
    pub fn zeros(cells: usize) -> Self {
        Self {
            h: vec![0.0; cells],
            c: vec![0.0; cells],
        }
    }
}

/// Per-layer activations cached by the forward pass. All matrices are
/// `steps × width` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub input_dim: usize,
    pub cells: usize,
    /// Layer inputs as fed (after inter-layer dropout).
    pub inputs: Vec<f64>,
    /// Activated gates, `4·cells` per step in blocks `i, f, o, c_in`.
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    /// Layer output before dropout.
    pub h: Vec<f64>,
}

impl LayerTrace {
    fn new(steps: usize, input_dim: usize, cells: usize) -> Self {
        Self {
            input_dim,
            cells,
            inputs: vec![0.0; steps * input_dim],
            gates: vec![0.0; steps * 4 * cells],
            c: vec![0.0; steps * cells],
            tanh_c: vec![0.0; steps * cells],
            h: vec![0.0; steps * cells],
        }
    }

    pub fn steps(&self) -> usize {
        self.h.len() / self.cells
    }

    pub fn gates_at(&self, t: usize) -> &[f64] {
        &self.gates[t * 4 * self.cells..(t + 1) * 4 * self.cells]
    }

    pub fn c_at(&self, t: usize) -> &[f64] {
        &self.c[t * self.cells..(t + 1) * self.cells]
    }

    pub fn tanh_c_at(&self, t: usize) -> &[f64] {
        &self.tanh_c[t * self.cells..(t + 1) * self.cells]
    }

    pub fn h_at(&self, t: usize) -> &[f64] {
        &self.h[t * self.cells..(t + 1) * self.cells]
    }

    pub fn input_at(&self, t: usize) -> &[f64] {
        &self.inputs[t * self.input_dim..(t + 1) * self.input_dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub layers: Vec<LayerTrace>,
    /// Top-layer hidden state at the last step, after dropout; the input of
    /// the dense head.
    pub output: Vec<f64>,
}

impl ForwardTrace {
    pub fn steps(&self) -> usize {
        self.layers[0].steps()
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `z = b; z += x[j]·Wxᵀ[j]; z += h[k]·Whᵀ[k]`, accumulated in index order
/// for every pre-activation.
fn preactivation(p: &LstmLayerParams, x: &[f64], h_prev: &[f64], z: &mut [f64]) {
    let g = 4 * p.cells;
    z.copy_from_slice(&p.b);
    for (xj, row) in x.iter().zip(p.w_x.chunks_exact(g)) {
        axpy(*xj, row, z);
    }
    for (hk, row) in h_prev.iter().zip(p.w_h.chunks_exact(g)) {
        axpy(*hk, row, z);
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Activates pre-activations `z` in place and produces `c`, `tanh(c)`, `h`.
#[allow(clippy::too_many_arguments)]
fn activate<A: ActivationMap>(
    map: &A,
    cells: usize,
    z: &mut [f64],
    c_prev: &[f64],
    c: &mut [f64],
    tanh_c: &mut [f64],
    h: &mut [f64],
) {
    let (ifo, cand) = z.split_at_mut(3 * cells);
    for v in ifo.iter_mut() {
        *v = map.gate(sigmoid(*v));
    }
    for v in cand.iter_mut() {
        *v = map.candidate(v.tanh());
    }
    let (i, rest) = ifo.split_at(cells);
    let (f, o) = rest.split_at(cells);
    for k in 0..cells {
        c[k] = map.cell(f[k] * c_prev[k] + i[k] * cand[k]);
        tanh_c[k] = map.cell_tanh(c[k].tanh());
        h[k] = map.hidden(o[k] * tanh_c[k]);
    }
}

fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Shape {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

/// One LSTM step.
pub fn lstm_cell_step(x: &[f64], state: &CellState, p: &LstmLayerParams) -> Result<CellState> {
    check_dim("cell input", p.input_dim, x.len())?;
    check_dim("hidden state", p.cells, state.h.len())?;
    check_dim("memory state", p.cells, state.c.len())?;
    let c = p.cells;
    let mut z = vec![0.0; 4 * c];
    preactivation(p, x, &state.h, &mut z);
    let mut next = CellState::zeros(c);
    let mut tanh_c = vec![0.0; c];
    activate(&Exact, c, &mut z, &state.c, &mut next.c, &mut tanh_c, &mut next.h);
    Ok(next)
}

/// Plain forward pass: zero initial state, no dropout.
pub fn lstm_forward(net: &Network, seq: &[f64]) -> Result<ForwardTrace> {
    lstm_forward_with(net, seq, &Exact, None, &mut NoObserver)
}

/// Runs `seq` (row-major, `input_dim` values per step) through every layer
/// from zero state, caching all intermediate signals.
pub fn lstm_forward_with<A: ActivationMap, O: StepObserver>(
    net: &Network,
    seq: &[f64],
    map: &A,
    masks: Option<&DropoutMasks>,
    observer: &mut O,
) -> Result<ForwardTrace> {
    let arch = net.architecture();
    if seq.is_empty() {
        return Err(Error::Degenerate("empty input sequence".into()));
    }
    if seq.len() % arch.input_dim != 0 {
        return Err(Error::Shape {
            what: "sequence length (multiple of input_dim)",
            expected: (seq.len() / arch.input_dim + 1) * arch.input_dim,
            got: seq.len(),
        });
    }
    let steps = seq.len() / arch.input_dim;
    if let Some(m) = masks {
        m.check(&arch, steps)?;
    }
    let cells = arch.cells;
    let mut z = vec![0.0; 4 * cells];
    let zero = vec![0.0; cells];
    let mut traces: Vec<LayerTrace> = Vec::with_capacity(arch.depth);
    for (l, p) in net.layers.iter().enumerate() {
        let mut tr = LayerTrace::new(steps, p.input_dim, cells);
        match traces.last() {
            None => tr.inputs.copy_from_slice(seq),
            Some(below) => {
                tr.inputs.copy_from_slice(&below.h);
                if let Some(m) = masks {
                    m.apply(l - 1, &mut tr.inputs);
                }
            }
        }
        for t in 0..steps {
            let (h_done, h_rest) = tr.h.split_at_mut(t * cells);
            let h_prev = if t == 0 { &zero[..] } else { &h_done[(t - 1) * cells..] };
            preactivation(p, &tr.inputs[t * p.input_dim..(t + 1) * p.input_dim], h_prev, &mut z);
            let (c_done, c_rest) = tr.c.split_at_mut(t * cells);
            let c_prev = if t == 0 { &zero[..] } else { &c_done[(t - 1) * cells..] };
            let c_now = &mut c_rest[..cells];
            let tc_now = &mut tr.tanh_c[t * cells..(t + 1) * cells];
            let h_now = &mut h_rest[..cells];
            activate(map, cells, &mut z, c_prev, c_now, tc_now, h_now);
            tr.gates[t * 4 * cells..(t + 1) * 4 * cells].copy_from_slice(&z);
            observer.on_step(StepView {
                layer: l,
                t,
                gates: &z,
                c: c_now,
                tanh_c: tc_now,
                h: h_now,
            });
        }
        traces.push(tr);
    }
    let top = traces.last().unwrap();
    let mut output = top.h_at(steps - 1).to_vec();
    if let Some(m) = masks {
        m.apply_step(arch.depth - 1, steps - 1, &mut output);
    }
    Ok(ForwardTrace {
        layers: traces,
        output,
    })
}

/// Reverse-mode gradients of the loss given `grad_logits = ∂L/∂logits`,
/// accumulated (added) into `grads`. `trace` must come from an exact
/// forward pass with the same `masks`.
pub fn bptt(
    net: &Network,
    trace: &ForwardTrace,
    grad_logits: &[f64],
    masks: Option<&DropoutMasks>,
    grads: &mut Network,
) -> Result<()> {
    let arch = net.architecture();
    check_dim("logit gradient", arch.classes, grad_logits.len())?;
    if !grads.same_shape(net) {
        return Err(Error::config("gradient buffer shape differs from network"));
    }
    let steps = trace.steps();
    let cells = arch.cells;

    // Dense head.
    let d = &net.dense;
    let mut dh_top = vec![0.0; cells];
    for (k, &gk) in grad_logits.iter().enumerate() {
        grads.dense.b[k] += gk;
        axpy(gk, &trace.output, &mut grads.dense.w[k * cells..(k + 1) * cells]);
        axpy(gk, &d.w[k * cells..(k + 1) * cells], &mut dh_top);
    }
    if let Some(m) = masks {
        m.apply_step(arch.depth - 1, steps - 1, &mut dh_top);
    }

    // Gradient w.r.t. each step's output of the current layer.
    let mut d_out = vec![0.0; steps * cells];
    d_out[(steps - 1) * cells..].copy_from_slice(&dh_top);

    let mut dz = vec![0.0; 4 * cells];
    let mut dh_next = vec![0.0; cells];
    let mut dc_next = vec![0.0; cells];
    let zero = vec![0.0; cells];
    for l in (0..arch.depth).rev() {
        let p = &net.layers[l];
        let tr = &trace.layers[l];
        let g = &mut grads.layers[l];
        let inp = p.input_dim;
        let mut d_in = if l > 0 { vec![0.0; steps * inp] } else { Vec::new() };
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        dc_next.iter_mut().for_each(|v| *v = 0.0);
        for t in (0..steps).rev() {
            let gates = tr.gates_at(t);
            let (gi, rest) = gates.split_at(cells);
            let (gf, rest) = rest.split_at(cells);
            let (go, gc) = rest.split_at(cells);
            let tc = tr.tanh_c_at(t);
            let c_prev = if t == 0 { &zero[..] } else { tr.c_at(t - 1) };
            let h_prev = if t == 0 { &zero[..] } else { tr.h_at(t - 1) };
            let d_out_t = &d_out[t * cells..(t + 1) * cells];
            for k in 0..cells {
                let dh = d_out_t[k] + dh_next[k];
                let dc = dc_next[k] + dh * go[k] * (1.0 - tc[k] * tc[k]);
                dz[k] = dc * gc[k] * gi[k] * (1.0 - gi[k]);
                dz[cells + k] = dc * c_prev[k] * gf[k] * (1.0 - gf[k]);
                dz[2 * cells + k] = dh * tc[k] * go[k] * (1.0 - go[k]);
                dz[3 * cells + k] = dc * gi[k] * (1.0 - gc[k] * gc[k]);
                dc_next[k] = dc * gf[k];
            }
            let four = 4 * cells;
            axpy(1.0, &dz, &mut g.b);
            let x = tr.input_at(t);
            for (j, &xj) in x.iter().enumerate() {
                axpy(xj, &dz, &mut g.w_x[j * four..(j + 1) * four]);
            }
            for (k, &hk) in h_prev.iter().enumerate() {
                axpy(hk, &dz, &mut g.w_h[k * four..(k + 1) * four]);
            }
            for (k, row) in p.w_h.chunks_exact(four).enumerate() {
                dh_next[k] = dot(row, &dz);
            }
            if l > 0 {
                let di = &mut d_in[t * inp..(t + 1) * inp];
                for (j, row) in p.w_x.chunks_exact(four).enumerate() {
                    di[j] = dot(row, &dz);
                }
            }
        }
        if l > 0 {
            if let Some(m) = masks {
                m.apply(l - 1, &mut d_in);
            }
            d_out = d_in;
        }
    }
    Ok(())
}

/// Forward, loss and backward for one labelled sequence. Gradients are
/// added into `grads`; returns the loss and the logits.
pub fn example_gradient(
    net: &Network,
    seq: &[f64],
    label: usize,
    masks: Option<&DropoutMasks>,
    grads: &mut Network,
) -> Result<(f64, Vec<f64>)> {
    let trace = lstm_forward_with(net, seq, &Exact, masks, &mut NoObserver)?;
    let logits = net.dense.logits(&trace.output);
    let (loss, dlogits) = softmax_cross_entropy(&logits, label)?;
    bptt(net, &trace, &dlogits, masks, grads)?;
    Ok((loss, logits))
}
