use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

use super::{param_count, Architecture, Gate, Network};

/// Uniform unit-scaling initialization: every weight ~ U(−a, a) with
/// `a = √3 / √fan_in`, biases zero except the forget bias, which is one.
///
/// `fan_in` is the column count of each matrix: `input_dim` for `W_x`,
/// `cells` for `W_h` and the dense head. Values are drawn in canonical
/// checkpoint order from one ChaCha8 stream.
pub fn init_params(arch: &Architecture, seed: u64) -> Result<Network> {
    let n = param_count(arch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n);
    let mut uniform = |count: usize, fan_in: usize, out: &mut Vec<f64>| {
        let a = 3f64.sqrt() / (fan_in as f64).sqrt();
        out.extend((0..count).map(|_| rng.random_range(-a..a)));
    };
    let c = arch.cells;
    for l in 0..arch.depth {
        let inp = arch.layer_input_dim(l);
        for _ in Gate::ALL {
            uniform(c * inp, inp, &mut values);
        }
        for _ in Gate::ALL {
            uniform(c * c, c, &mut values);
        }
        for g in Gate::ALL {
            let b = if g == Gate::Forget { 1.0 } else { 0.0 };
            values.extend(std::iter::repeat_n(b, c));
        }
    }
    uniform(arch.classes * c, c, &mut values);
    values.extend(std::iter::repeat_n(0.0, arch.classes));
    Network::from_canonical(arch, &values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch() -> Architecture {
        Architecture {
            input_dim: 2,
            cells: 32,
            depth: 2,
            classes: 4,
        }
    }

    #[test]
    fn forget_bias_is_one() {
        let net = init_params(&arch(), 3).unwrap();
        for l in &net.layers {
            assert!(l.bias(Gate::Forget).iter().all(|&b| b == 1.0));
            for g in [Gate::Input, Gate::Output, Gate::Cell] {
                assert!(l.bias(g).iter().all(|&b| b == 0.0));
            }
        }
        assert!(net.dense.bias().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn deterministic() {
        assert_eq!(init_params(&arch(), 7).unwrap(), init_params(&arch(), 7).unwrap());
        assert_ne!(init_params(&arch(), 7).unwrap(), init_params(&arch(), 8).unwrap());
    }

    #[test]
    fn bounds() {
        let net = init_params(&arch(), 1).unwrap();
        let a0 = 3f64.sqrt() / 2f64.sqrt();
        assert!(net.layers[0].w_x.iter().all(|w| w.abs() < a0));
        assert!(net.layers[0].w_x.iter().any(|w| w.abs() > 0.9 * a0));
        let a1 = 3f64.sqrt() / 32f64.sqrt();
        assert!(net.layers[1].w_h.iter().all(|w| w.abs() < a1));
        assert!(net.layers[1].w_x.iter().all(|w| w.abs() < a1));
    }

    #[test]
    fn unit_variance_preactivations() {
        // Var(W·x) for unit-variance x, for both the input and the
        // recurrent matrix.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let a = Architecture {
            input_dim: 30,
            cells: 34,
            depth: 1,
            classes: 2,
        };
        let mut samples = Vec::new();
        for trial in 0..1000u64 {
            let net = init_params(&a, trial).unwrap();
            let p = &net.layers[0];
            let x: Vec<f64> = (0..34).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            let mut s = 0.0;
            if trial % 2 == 0 {
                for j in 0..30 {
                    s += p.w_x(Gate::Input, 0, j) * x[j];
                }
            } else {
                for m in 0..34 {
                    s += p.w_h(Gate::Forget, 1, m) * x[m];
                }
            }
            samples.push(s);
        }
        let mean = samples.iter().sum::<f64>() / 1000.0;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / 999.0;
        assert!((var - 1.0).abs() < 0.2, "variance {var}");
    }
}
