//! Run configuration: a TOML file layered over built-in defaults, then
//! `--set key=value` overrides, then dedicated flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use amc_core::features::{FeatureKind, ScanConfig};
use amc_core::model::{ClassifierConfig, TrainConfig};
use amc_core::quant::QuantScheme;
use amc_core::sigsynth::{DatasetSpec, ImpairmentProfile, ModulationScheme};

use crate::CliError;

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "AMC_OUT_ROOT";

/// File name of the resolved configuration written into every output
/// directory.
pub const RESOLVED_NAME: &str = "run.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    Train,
    Test,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub subset: Subset,
    /// Threshold for the reported high-SNR accuracy.
    pub high_snr_db: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            subset: Subset::Test,
            high_snr_db: 12.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantConfig {
    pub schemes: Vec<QuantScheme>,
    /// Ternary threshold as a multiple of mean |W|.
    pub threshold: f64,
}

impl Default for QuantConfig {
    fn default() -> Self {
        Self {
            schemes: QuantScheme::ALL.to_vec(),
            threshold: amc_core::quant::TERNARY_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatesConfig {
    /// Number of frames, taken from the evaluation subset in order.
    pub frames: usize,
    pub left: f64,
    pub right: f64,
    pub trace: bool,
}

impl Default for GatesConfig {
    fn default() -> Self {
        Self {
            frames: 4,
            left: 0.1,
            right: 0.9,
            trace: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub frames: usize,
    pub repeats: usize,
    pub schemes: Vec<QuantScheme>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            frames: 200,
            repeats: 3,
            schemes: QuantScheme::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportConfig {
    /// `None` uses the model's feature representation.
    pub feature: Option<FeatureKind>,
    pub subset: Subset,
    /// Cap on the number of frames written.
    pub max_frames: Option<usize>,
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self {
            feature: None,
            subset: Subset::All,
            max_frames: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// When set, replaces the dataset, split, init and shuffle seeds.
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    /// Input dataset; `train` generates one from `dataset` when absent.
    pub dataset_path: Option<PathBuf>,
    pub model_path: Option<PathBuf>,
    pub dataset: DatasetSpec,
    pub split: SplitConfig,
    pub model: ClassifierConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub quant: QuantConfig,
    pub scan: ScanConfig,
    pub gates: GatesConfig,
    pub bench: BenchConfig,
    pub export: ExportConfig,
}

impl Default for RunConfig {
    /// The four-class desk-scale experiment.
    fn default() -> Self {
        let schemes = vec![
            ModulationScheme::Bpsk,
            ModulationScheme::Qpsk,
            ModulationScheme::Gfsk,
            ModulationScheme::Pam4,
        ];
        Self {
            seed: None,
            out_dir: None,
            dataset_path: None,
            model_path: None,
            dataset: DatasetSpec {
                schemes: schemes.clone(),
                snr_grid_db: vec![0.0, 6.0, 12.0, 18.0],
                sps_set: vec![4],
                length_set: vec![128],
                frames_per_cell: 500,
                master_seed: 3,
                impairments: ImpairmentProfile::default(),
                waveform: Default::default(),
            },
            split: SplitConfig::default(),
            model: ClassifierConfig {
                depth: 2,
                cells: 32,
                feature: FeatureKind::AmpPhase,
                classes: schemes,
                keep_prob: 0.8,
                seed: 0,
            },
            train: TrainConfig {
                minibatch: 100,
                epochs: 25,
                ..TrainConfig::default()
            },
            eval: EvalConfig::default(),
            quant: QuantConfig::default(),
            scan: ScanConfig::default(),
            gates: GatesConfig::default(),
            bench: BenchConfig::default(),
            export: ExportConfig::default(),
        }
    }
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses `a.b.c=value`; the value is read as TOML, falling back to a
/// bare string.
fn override_table(assignment: &str) -> Result<Table, CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got {assignment:?}")))?;
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("invalid key {key:?}")));
    }
    let mut node = Table::new();
    node.insert(parts.pop().unwrap().to_string(), value);
    while let Some(p) = parts.pop() {
        let mut t = Table::new();
        t.insert(p.to_string(), Value::Table(node));
        node = t;
    }
    Ok(node)
}

fn has_key(t: &Table, path: &[&str]) -> bool {
    match path {
        [] => true,
        [k, rest @ ..] => match t.get(*k) {
            Some(Value::Table(sub)) => has_key(sub, rest),
            Some(_) => rest.is_empty(),
            None => false,
        },
    }
}

impl RunConfig {
    /// Defaults, then `file`, then `sets` in order.
    #[cfg(test)]
    pub fn resolve(file: Option<&Path>, sets: &[String]) -> Result<Self, CliError> {
        Self::resolve_with(file, sets, Table::new())
    }

    /// As [`resolve`](Self::resolve) with `flags` applied last.
    pub fn resolve_with(file: Option<&Path>, sets: &[String], flags: Table) -> Result<Self, CliError> {
        let mut user = Table::new();
        if let Some(p) = file {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            let t: Table = text
                .parse()
                .map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?;
            merge(&mut user, t);
        }
        for s in sets {
            merge(&mut user, override_table(s)?);
        }
        merge(&mut user, flags);
        let mut table = Table::try_from(RunConfig::default()).expect("defaults serialize");
        let classes_given = has_key(&user, &["model", "classes"]);
        merge(&mut table, user);
        let mut cfg: RunConfig = table
            .try_into()
            .map_err(|e| CliError::Invalid(format!("configuration: {e}")))?;
        if !classes_given {
            cfg.model.classes = cfg.dataset.schemes.clone();
        }
        if let Some(s) = cfg.seed {
            cfg.dataset.master_seed = s;
            cfg.split.seed = s;
            cfg.model.seed = s;
            cfg.train.shuffle_seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.dataset.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if !(0.0..=1.0).contains(&self.split.train_fraction) {
            return Err(CliError::Invalid("split.train_fraction must lie in [0, 1]".into()));
        }
        if !(self.gates.left < self.gates.right) {
            return Err(CliError::Invalid("gates.left must be below gates.right".into()));
        }
        if let Some(f) = &self.export.feature {
            if let FeatureKind::Psd { scan } = f {
                scan.validate()?;
            }
        }
        self.scan.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Flag > config file > `$AMC_OUT_ROOT/<command>` > `runs/<command>`.
    pub fn output_dir(&self, command: &str) -> PathBuf {
        if let Some(d) = &self.out_dir {
            return d.clone();
        }
        let root = std::env::var_os(OUT_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"));
        root.join(command)
    }
}
