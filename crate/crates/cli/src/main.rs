//! `amc`: synthesis, training, evaluation, quantization and analysis runs
//! driven by TOML configs.
//!
//! Configuration precedence, lowest first: built-in defaults (the
//! four-class desk-scale experiment), `--config FILE`, `--set key=value`
//! in order, then dedicated flags such as `--seed` or `--dataset`. Every
//! run writes the resolved configuration to `run.toml` in its output
//! directory; `amc --config <dir>/run.toml <command>` repeats the run.
//!
//! Exit codes: 0 success, 2 usage error, 3 I/O error, 4 numeric or
//! validation error.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use toml::{Table, Value};

use amc_core::quant::QuantScheme;

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] amc_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } | CliError::Core(amc_core::Error::Io { .. }) => 3,
            CliError::Invalid(_) | CliError::Core(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "amc", version, about = "LSTM modulation classification runs")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override one config value, e.g. `--set train.epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Master seed for dataset, split, initialization and shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [default: $AMC_OUT_ROOT/<command> or runs/<command>].
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a dataset.
    Gen,
    /// Train a classifier; generates the dataset when none is given.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Per-SNR accuracy and confusion matrix.
    Eval {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Quantized checkpoints and footprint; evaluates each when a dataset
    /// is given.
    Quantize {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        scheme: Vec<QuantScheme>,
    },
    /// Gate saturation and activation traces for a few frames.
    Gates {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Convert an IQ dataset into PSD vectors by sequential scanning.
    Scan {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Host classifications per second, full precision vs quantized.
    Bench {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Dump classifier input features as CSV.
    ExportFeatures {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Gen => "gen",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Quantize { .. } => "quantize",
            Command::Gates { .. } => "gates",
            Command::Scan { .. } => "scan",
            Command::Bench { .. } => "bench",
            Command::ExportFeatures { .. } => "export-features",
        }
    }
}

fn path_value(p: &Path) -> Value {
    Value::String(p.to_string_lossy().into_owned())
}

fn schemes_value(s: &[QuantScheme]) -> Value {
    Value::Array(s.iter().map(|q| Value::String(q.name().into())).collect())
}

/// Dedicated flags as a table layered over the config.
fn flag_table(cli: &Cli) -> Table {
    let mut t = Table::new();
    let mut section = |name: &str, key: &str, v: Value| {
        let sub = t
            .entry(name.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        if let Value::Table(s) = sub {
            s.insert(key.into(), v);
        }
    };
    match &cli.command {
        Command::Quantize { scheme, .. } if !scheme.is_empty() => {
            section("quant", "schemes", schemes_value(scheme))
        }
        Command::Gates { frames: Some(n), .. } => section("gates", "frames", Value::Integer(*n as i64)),
        Command::Bench { frames: Some(n), .. } => section("bench", "frames", Value::Integer(*n as i64)),
        _ => {}
    }
    if let Some(s) = cli.seed {
        t.insert("seed".into(), Value::Integer(s as i64));
    }
    if let Some(o) = &cli.out {
        t.insert("out_dir".into(), path_value(o));
    }
    let (dataset, model) = match &cli.command {
        Command::Gen => (None, None),
        Command::Train { dataset } | Command::Scan { dataset } => (dataset.as_ref(), None),
        Command::Eval { model, dataset }
        | Command::Quantize { model, dataset, .. }
        | Command::Gates { model, dataset, .. }
        | Command::Bench { model, dataset, .. }
        | Command::ExportFeatures { model, dataset } => (dataset.as_ref(), model.as_ref()),
    };
    if let Some(d) = dataset {
        t.insert("dataset_path".into(), path_value(d));
    }
    if let Some(m) = model {
        t.insert("model_path".into(), path_value(m));
    }
    t
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = RunConfig::resolve_with(cli.config.as_deref(), &cli.sets, flag_table(&cli))?;
    let out = cfg.output_dir(cli.command.name());
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let resolved = out.join(config::RESOLVED_NAME);
    std::fs::write(&resolved, cfg.to_toml()).map_err(|e| CliError::io(&resolved, e))?;
    match cli.command {
        Command::Gen => commands::gen(&cfg, &out),
        Command::Train { .. } => commands::train(&cfg, &out),
        Command::Eval { .. } => commands::eval(&cfg, &out),
        Command::Quantize { .. } => commands::quantize(&cfg, &out),
        Command::Gates { .. } => commands::gates(&cfg, &out),
        Command::Scan { .. } => commands::scan(&cfg, &out),
        Command::Bench { .. } => commands::bench(&cfg, &out),
        Command::ExportFeatures { .. } => commands::export_features(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("amc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
