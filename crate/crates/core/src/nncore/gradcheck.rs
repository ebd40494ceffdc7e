use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn loss_of(net: &Network, seq: &[f64], label: usize, masks: Option<&DropoutMasks>) -> f64 {
    let tr = lstm_forward_with(net, seq, &Exact, masks, &mut NoObserver).unwrap();
    softmax_cross_entropy(&net.dense.logits(&tr.output), label).unwrap().0
}

/// Max relative error between analytic and central-difference gradients.
fn check(seed: u64, with_dropout: bool) -> (f64, f64) {
    let arch = Architecture {
        input_dim: 2,
        cells: 8,
        depth: 2,
        classes: 5,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = init_params(&arch, seed).unwrap();
    let seq: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
    let label = rng.random_range(0..5);
    let masks = with_dropout.then(|| DropoutMasks::sample(&arch, 10, 0.8, &mut rng).unwrap());
    let mut grads = net.zeros_like();
    example_gradient(&net, &seq, label, masks.as_ref(), &mut grads).unwrap();
    let analytic = grads.canonical_values();
    let base = net.canonical_values();
    let h = 1e-4;
    let mut worst = 0.0f64;
    let mut worst_abs = 0.0f64;
    for k in 0..base.len() {
        let mut v = base.clone();
        v[k] += h;
        let up = loss_of(&Network::from_canonical(&arch, &v).unwrap(), &seq, label, masks.as_ref());
        v[k] -= 2.0 * h;
        let dn = loss_of(&Network::from_canonical(&arch, &v).unwrap(), &seq, label, masks.as_ref());
        let fd = (up - dn) / (2.0 * h);
        let a = analytic[k];
        let err = (a - fd).abs();
        worst_abs = worst_abs.max(err);
        let scale = a.abs().max(fd.abs());
        if scale > 0.0 {
            worst = worst.max(err / scale);
        }
    }
    (worst, worst_abs)
}

#[test]
fn bptt_matches_finite_differences() {
    for seed in 0..5 {
        let (rel, abs) = check(seed, false);
        assert!(rel < 1e-4, "seed {seed}: relative error {rel:e} (abs {abs:e})");
    }
}

#[test]
fn bptt_with_dropout_matches_finite_differences() {
    let (rel, _) = check(77, true);
    assert!(rel < 1e-4, "relative error {rel:e}");
}

#[test]
fn zero_logit_gradient_gives_zero_gradients() {
    let arch = Architecture {
        input_dim: 2,
        cells: 4,
        depth: 2,
        classes: 3,
    };
    let net = init_params(&arch, 1).unwrap();
    let seq: Vec<f64> = (0..16).map(|i| (i as f64).cos()).collect();
    let tr = lstm_forward(&net, &seq).unwrap();
    let mut grads = net.zeros_like();
    bptt(&net, &tr, &[0.0; 3], None, &mut grads).unwrap();
    assert!(grads.canonical_values().iter().all(|&g| g == 0.0));
}

#[test]
fn gradient_reaches_first_layer() {
    let arch = Architecture {
        input_dim: 2,
        cells: 8,
        depth: 2,
        classes: 5,
    };
    let net = init_params(&arch, 4).unwrap();
    let seq: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).sin()).collect();
    let mut grads = net.zeros_like();
    example_gradient(&net, &seq, 2, None, &mut grads).unwrap();
    let l0 = &grads.layers[0];
    assert!(l0.w_x.iter().any(|&g| g != 0.0));
    assert!(l0.w_h.iter().any(|&g| g != 0.0));
    assert!(l0.b.iter().any(|&g| g != 0.0));
}
