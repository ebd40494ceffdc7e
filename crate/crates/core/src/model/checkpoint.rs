//! Checkpoints are a pretty-printed JSON manifest plus a separate blob of
//! little-endian `f32` parameters in canonical order (layer-major; within a
//! layer `W_x` for gates i, f, o, c, then `W_h`, then biases; then the dense
//! weights and bias). The blob sits next to the manifest with the extension
//! `.params`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nncore::{Architecture, Network};

use super::{ClassifierConfig, EpochStats, Provenance, TrainConfig, TrainedModel};

pub const CHECKPOINT_FORMAT: &str = "amc-lstm-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub config: ClassifierConfig,
    pub train_config: TrainConfig,
    pub history: Vec<EpochStats>,
    pub provenance: Provenance,
    pub param_count: usize,
    pub param_encoding: String,
    pub params_file: String,
    pub params_sha256: String,
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("params")
}

impl TrainedModel {
    /// Serialized `(manifest, parameter blob)`.
    pub fn checkpoint_bytes(&self, params_file: &str) -> (Vec<u8>, Vec<u8>) {
        let blob = self.network.to_f32_le();
        let manifest = CheckpointManifest {
            format: CHECKPOINT_FORMAT.into(),
            version: 1,
            architecture: self.network.architecture(),
            config: self.config.clone(),
            train_config: self.train_config.clone(),
            history: self.history.clone(),
            provenance: self.provenance.clone(),
            param_count: self.network.param_count(),
            param_encoding: "f32-le".into(),
            params_file: params_file.into(),
            params_sha256: sha256_hex(&blob),
        };
        let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        json.push(b'\n');
        (json, blob)
    }

    pub fn from_checkpoint_bytes(manifest: &[u8], blob: &[u8]) -> Result<Self> {
        let m: CheckpointManifest = serde_json::from_slice(manifest)
            .map_err(|e| Error::format(format!("checkpoint manifest: {e}")))?;
        if m.format != CHECKPOINT_FORMAT || m.version != 1 {
            return Err(Error::format(format!(
                "unsupported checkpoint {} v{}",
                m.format, m.version
            )));
        }
        if m.architecture != m.config.architecture() {
            return Err(Error::format("manifest architecture disagrees with config"));
        }
        if sha256_hex(blob) != m.params_sha256 {
            return Err(Error::format("parameter blob checksum mismatch"));
        }
        let network = Network::from_f32_le(&m.architecture, blob)?;
        Ok(Self {
            config: m.config,
            train_config: m.train_config,
            network,
            history: m.history,
            provenance: m.provenance,
        })
    }

    /// Writes `path` (manifest) and the sibling `.params` blob.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bp = blob_path(path);
        let name = bp
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let (json, blob) = self.checkpoint_bytes(&name);
        fs::write(path, json).map_err(|e| Error::io(path, e))?;
        fs::write(&bp, blob).map_err(|e| Error::io(&bp, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = fs::read(path).map_err(|e| Error::io(path, e))?;
        let m: CheckpointManifest = serde_json::from_slice(&json)
            .map_err(|e| Error::format(format!("checkpoint manifest: {e}")))?;
        let bp = path.with_file_name(&m.params_file);
        let blob = fs::read(&bp).map_err(|e| Error::io(&bp, e))?;
        Self::from_checkpoint_bytes(&json, &blob)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use crate::nncore::init_params;
    use crate::sigsynth::{modulate, ModulationScheme};

    fn model() -> TrainedModel {
        let cfg = ClassifierConfig {
            depth: 2,
            cells: 6,
            feature: FeatureKind::AmpPhase,
            classes: vec![ModulationScheme::Bpsk, ModulationScheme::Pam4],
            keep_prob: 0.8,
            seed: 12,
        };
        let net = init_params(&cfg.architecture(), 12).unwrap();
        let mut m = TrainedModel::from_network(cfg, net).unwrap();
        m.history.push(EpochStats {
            epoch: 0,
            mean_loss: 0.1 + 0.2,
            train_accuracy: 1.0 / 3.0,
        });
        m
    }

    #[test]
    fn file_roundtrip_is_byte_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        let m = model();
        m.save(&p).unwrap();
        let back = TrainedModel::load(&p).unwrap();
        assert_eq!(back, m);
        let p2 = dir.path().join("again.json");
        back.save(&p2).unwrap();
        assert_eq!(fs::read(p.with_extension("params")).unwrap(), fs::read(p2.with_extension("params")).unwrap());
        let (a, _) = m.checkpoint_bytes("x.params");
        let (b, _) = back.checkpoint_bytes("x.params");
        assert_eq!(a, b);
        let x = modulate(ModulationScheme::Pam4, 4, 64, 2).unwrap().samples;
        assert_eq!(m.predict_samples(&x).unwrap(), back.predict_samples(&x).unwrap());
    }

    #[test]
    fn corrupt_blob_rejected() {
        let m = model();
        let (json, mut blob) = m.checkpoint_bytes("m.params");
        blob[5] ^= 1;
        assert!(matches!(
            TrainedModel::from_checkpoint_bytes(&json, &blob),
            Err(Error::Format(_))
        ));
        assert!(TrainedModel::from_checkpoint_bytes(b"{}", &blob).is_err());
    }

    #[test]
    fn missing_file_names_path() {
        let err = TrainedModel::load(Path::new("/nonexistent/model.json")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/model.json"));
    }
}
