//! Quantized checkpoint: JSON manifest (scheme, per-tensor shapes and `α`)
//! plus a payload file with the extension `.qparams`.
//!
//! Payload layout: the codes of every tensor in manifest order, packed
//! little-endian with the first entry in the least significant bits. Ternary
//! codes use 2 bits (`00` → 0, `01` → +1, `11` → −1); binary codes use
//! 1 bit (`1` → +1, `0` → −1). The final code byte is zero padded. The
//! full-precision biases follow as little-endian `f32`, layer by layer in
//! gate order i, f, o, c, then the dense bias. A `FULL` payload is the
//! plain model parameter blob.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ClassifierConfig;
use crate::nncore::{Gate, Network};

use super::{QuantScheme, QuantTensor, QuantizedModel};

pub const QUANT_FORMAT: &str = "amc-quant-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    scheme: QuantScheme,
    config: ClassifierConfig,
    bits_per_code: usize,
    tensors: Vec<TensorEntry>,
    payload_file: String,
    payload_bytes: usize,
}

fn pack(codes: impl Iterator<Item = i8>, bits: usize) -> Vec<u8> {
    let per_byte = 8 / bits;
    let mut out = Vec::new();
    for (k, c) in codes.enumerate() {
        if k % per_byte == 0 {
            out.push(0u8);
        }
        let v: u8 = match (bits, c) {
            (2, 0) => 0b00,
            (2, 1) => 0b01,
            (2, -1) => 0b11,
            (1, 1) => 1,
            (1, -1) => 0,
            _ => unreachable!("code {c} not representable in {bits} bits"),
        };
        *out.last_mut().unwrap() |= v << (bits * (k % per_byte));
    }
    out
}

fn unpack(bytes: &[u8], n: usize, bits: usize) -> Result<Vec<i8>> {
    let per_byte = 8 / bits;
    if bytes.len() < n.div_ceil(per_byte) {
        return Err(Error::Truncated {
            needed: n.div_ceil(per_byte),
            available: bytes.len(),
        });
    }
    let mask = (1u8 << bits) - 1;
    (0..n)
        .map(|k| {
            let v = (bytes[k / per_byte] >> (bits * (k % per_byte))) & mask;
            match (bits, v) {
                (2, 0b00) => Ok(0),
                (2, 0b01) => Ok(1),
                (2, 0b11) => Ok(-1),
                (1, 1) => Ok(1),
                (1, 0) => Ok(-1),
                _ => Err(Error::format(format!("invalid {bits}-bit code {v:#b}"))),
            }
        })
        .collect()
}

fn biases(net: &Network) -> Vec<f64> {
    let mut out = Vec::new();
    for l in &net.layers {
        for g in Gate::ALL {
            out.extend_from_slice(l.bias(g));
        }
    }
    out.extend_from_slice(net.dense.bias());
    out
}

impl QuantizedModel {
    /// Serialized `(manifest, payload)`.
    pub fn checkpoint_bytes(&self, payload_file: &str) -> (Vec<u8>, Vec<u8>) {
        let bits = if self.scheme == QuantScheme::Full {
            32
        } else {
            self.scheme.bits_per_weight()
        };
        let payload = if self.scheme == QuantScheme::Full {
            self.network.to_f32_le()
        } else {
            let mut p = pack(self.tensors.iter().flat_map(|t| t.codes.iter().copied()), bits);
            p.extend(biases(&self.network).iter().flat_map(|&b| (b as f32).to_le_bytes()));
            p
        };
        let manifest = Manifest {
            format: QUANT_FORMAT.into(),
            version: 1,
            scheme: self.scheme,
            config: self.config.clone(),
            bits_per_code: bits,
            tensors: self
                .tensors
                .iter()
                .map(|t| TensorEntry {
                    name: t.name.clone(),
                    rows: t.rows,
                    cols: t.cols,
                    alpha: t.alpha,
                })
                .collect(),
            payload_file: payload_file.into(),
            payload_bytes: payload.len(),
        };
        let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        json.push(b'\n');
        (json, payload)
    }

    pub fn from_checkpoint_bytes(manifest: &[u8], payload: &[u8]) -> Result<Self> {
        let m: Manifest = serde_json::from_slice(manifest)
            .map_err(|e| Error::format(format!("quantized manifest: {e}")))?;
        if m.format != QUANT_FORMAT || m.version != 1 {
            return Err(Error::format(format!("unsupported checkpoint {} v{}", m.format, m.version)));
        }
        if payload.len() != m.payload_bytes {
            return Err(Error::format(format!(
                "payload has {} bytes, manifest says {}",
                payload.len(),
                m.payload_bytes
            )));
        }
        m.config.validate()?;
        let arch = m.config.architecture();
        if m.scheme == QuantScheme::Full {
            let network = Network::from_f32_le(&arch, payload)?;
            return Ok(QuantizedModel {
                scheme: m.scheme,
                config: m.config,
                tensors: Vec::new(),
                network,
            });
        }
        let bits = m.scheme.bits_per_weight();
        if m.bits_per_code != bits {
            return Err(Error::format("bits_per_code does not match scheme"));
        }
        let n_codes: usize = m.tensors.iter().map(|t| t.rows * t.cols).sum();
        let code_bytes = n_codes.div_ceil(8 / bits);
        let all = unpack(payload, n_codes, bits)?;
        let mut pos = 0;
        let tensors: Vec<QuantTensor> = m
            .tensors
            .into_iter()
            .map(|t| {
                let n = t.rows * t.cols;
                let codes = all[pos..pos + n].to_vec();
                pos += n;
                QuantTensor {
                    name: t.name,
                    rows: t.rows,
                    cols: t.cols,
                    codes,
                    alpha: t.alpha,
                }
            })
            .collect();
        let b: Vec<f64> = payload[code_bytes..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let mut base = Network::zeros(&arch)?;
        let expected = arch.depth * 4 * arch.cells + arch.classes;
        if b.len() != expected {
            return Err(Error::Shape {
                what: "bias count",
                expected,
                got: b.len(),
            });
        }
        let mut it = b.chunks_exact(arch.cells);
        for l in &mut base.layers {
            for g in Gate::ALL {
                l.bias_mut(g).copy_from_slice(it.next().unwrap());
            }
        }
        base.dense
            .bias_mut()
            .copy_from_slice(&b[arch.depth * 4 * arch.cells..]);
        let expected_shapes = super::tensor_names(&arch);
        if expected_shapes.len() != tensors.len()
            || expected_shapes
                .iter()
                .zip(&tensors)
                .any(|((_, r, c), t)| (*r, *c) != (t.rows, t.cols))
        {
            return Err(Error::format("tensor shapes do not match architecture"));
        }
        Ok(QuantizedModel::from_tensors(m.scheme, m.config, tensors, &base))
    }

    /// Writes `path` (manifest) and the sibling `.qparams` payload.
    pub fn save(&self, path: &Path) -> Result<()> {
        let pp = path.with_extension("qparams");
        let name = pp
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let (json, payload) = self.checkpoint_bytes(&name);
        fs::write(path, json).map_err(|e| Error::io(path, e))?;
        fs::write(&pp, payload).map_err(|e| Error::io(&pp, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = fs::read(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = serde_json::from_slice(&json)
            .map_err(|e| Error::format(format!("quantized manifest: {e}")))?;
        let pp = path.with_file_name(&m.payload_file);
        let payload = fs::read(&pp).map_err(|e| Error::io(&pp, e))?;
        Self::from_checkpoint_bytes(&json, &payload)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use crate::model::TrainedModel;
    use crate::nncore::init_params;
    use crate::quant::{footprint, quantize};
    use crate::sigsynth::ModulationScheme;

    fn model() -> TrainedModel {
        let cfg = ClassifierConfig {
            depth: 2,
            cells: 5,
            feature: FeatureKind::AmpPhase,
            classes: vec![ModulationScheme::Bpsk, ModulationScheme::Pam4, ModulationScheme::Qpsk],
            keep_prob: 0.8,
            seed: 2,
        };
        let net = init_params(&cfg.architecture(), 2).unwrap();
        TrainedModel::from_network(cfg, net).unwrap()
    }

    #[test]
    fn pack_unpack() {
        let codes = [1i8, 0, -1, -1, 0, 1, 1];
        let p = pack(codes.iter().copied(), 2);
        assert_eq!(p, vec![0b1111_0001, 0b0001_0100]);
        assert_eq!(unpack(&p, 7, 2).unwrap(), codes);
        let b = [1i8, -1, 1, 1, -1, -1, -1, 1, 1];
        let p = pack(b.iter().copied(), 1);
        assert_eq!(p, vec![0b1000_1101, 0b1]);
        assert_eq!(unpack(&p, 9, 1).unwrap(), b);
        assert!(unpack(&[0b10], 1, 2).is_err());
    }

    #[test]
    fn roundtrip_every_scheme() {
        let m = model();
        let dir = tempfile::tempdir().unwrap();
        for s in QuantScheme::ALL {
            let q = quantize(&m, s).unwrap();
            let (json, payload) = q.checkpoint_bytes("q.qparams");
            let back = QuantizedModel::from_checkpoint_bytes(&json, &payload).unwrap();
            assert_eq!(back, q);
            assert_eq!(back.checkpoint_bytes("q.qparams"), (json, payload.clone()));
            if s != QuantScheme::Full {
                let n_codes: usize = q.tensors.iter().map(|t| t.codes.len()).sum();
                let bits = s.bits_per_weight();
                assert_eq!(
                    payload.len(),
                    n_codes.div_ceil(8 / bits) + 4 * (footprint(&q).weight_count - n_codes)
                );
            }
            let p = dir.path().join(format!("{s}.json"));
            q.save(&p).unwrap();
            assert_eq!(QuantizedModel::load(&p).unwrap(), q);
        }
    }

    #[test]
    fn truncated_payload_rejected() {
        let q = quantize(&model(), QuantScheme::TwFa).unwrap();
        let (json, payload) = q.checkpoint_bytes("q.qparams");
        assert!(QuantizedModel::from_checkpoint_bytes(&json, &payload[..payload.len() - 1]).is_err());
    }
}
