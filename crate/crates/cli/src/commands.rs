use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use amc_core::analysis::{activation_trace, emit_report, gate_saturation, Thresholds};
use amc_core::features::{sequential_scan, write_psd_csv, FeatureKind};
use amc_core::model::{evaluate, train as train_model, ExampleSet, TrainedModel};
use amc_core::nncore::argmax;
use amc_core::quant::{footprint, quantize_with, QuantizedModel};
use amc_core::sigsynth::{generate_dataset, Dataset};

use crate::config::{RunConfig, Subset};
use crate::CliError;

pub const DATASET_FILE: &str = "dataset.iqd";
pub const MODEL_FILE: &str = "model.json";

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, body).map_err(|e| CliError::io(path, e))
}

fn dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    match &cfg.dataset_path {
        Some(p) => {
            if !p.exists() {
                return Err(CliError::io(p, std::io::ErrorKind::NotFound.into()));
            }
            Ok(Dataset::load(p)?)
        }
        None => Ok(generate_dataset(&cfg.dataset)?),
    }
}

fn model_path(cfg: &RunConfig) -> Result<&PathBuf, CliError> {
    cfg.model_path
        .as_ref()
        .ok_or_else(|| CliError::Usage("a model checkpoint is required (--model)".into()))
}

fn model(cfg: &RunConfig) -> Result<TrainedModel, CliError> {
    let p = model_path(cfg)?;
    if !p.exists() {
        return Err(CliError::io(p, std::io::ErrorKind::NotFound.into()));
    }
    Ok(TrainedModel::load(p)?)
}

fn subset_indices(ds: &Dataset, cfg: &RunConfig, which: Subset) -> Result<Vec<usize>, CliError> {
    Ok(match which {
        Subset::All => (0..ds.len()).collect(),
        Subset::Train => ds.split(cfg.split.train_fraction, cfg.split.seed)?.train,
        Subset::Test => ds.split(cfg.split.train_fraction, cfg.split.seed)?.test,
    })
}

pub fn gen(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let ds = generate_dataset(&cfg.dataset)?;
    let p = out.join(DATASET_FILE);
    ds.save(&p)?;
    eprintln!("wrote {} frames to {}", ds.len(), p.display());
    Ok(())
}

pub fn train(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let ds = dataset(cfg)?;
    let idx = subset_indices(&ds, cfg, Subset::Train)?;
    let set = ExampleSet::from_dataset(&ds, &idx, &cfg.model)?;
    let m = train_model(&set, &cfg.model, &cfg.train, |s| {
        eprintln!(
            "epoch {:>3}  loss {:.4}  train acc {:.3}",
            s.epoch, s.mean_loss, s.train_accuracy
        )
    })?;
    m.save(&out.join(MODEL_FILE))?;
    let mut h = String::from("epoch,mean_loss,train_accuracy\n");
    for s in &m.history {
        writeln!(h, "{},{},{}", s.epoch, s.mean_loss, s.train_accuracy).unwrap();
    }
    write(&out.join("history.csv"), h)
}

pub fn eval(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let m = model(cfg)?;
    let ds = dataset(cfg)?;
    let idx = subset_indices(&ds, cfg, cfg.eval.subset)?;
    let set = ExampleSet::from_dataset(&ds, &idx, &m.config)?;
    let r = evaluate(&m, &set)?;
    emit_report(&r, out, "eval")?;
    println!("overall accuracy {:.4}", r.overall_accuracy);
    if let Some(a) = r.accuracy_at_or_above(cfg.eval.high_snr_db) {
        println!("accuracy at SNR >= {} dB {:.4}", cfg.eval.high_snr_db, a);
    }
    Ok(())
}

pub fn quantize(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let m = model(cfg)?;
    let eval_set = match &cfg.dataset_path {
        Some(_) => {
            let ds = dataset(cfg)?;
            let idx = subset_indices(&ds, cfg, cfg.eval.subset)?;
            Some(ExampleSet::from_dataset(&ds, &idx, &m.config)?)
        }
        None => None,
    };
    let mut fp = String::from(
        "scheme,weight_count,bits_per_weight,weight_bits,scale_bits,bits_total,macs_per_timestep\n",
    );
    let mut acc = String::from("scheme,overall_accuracy,high_snr_accuracy\n");
    for &s in &cfg.quant.schemes {
        let q = quantize_with(&m, s, cfg.quant.threshold)?;
        q.save(&out.join(format!("model_{}.json", s.name().to_ascii_lowercase())))?;
        let f = footprint(&q);
        writeln!(
            fp,
            "{s},{},{},{},{},{},{}",
            f.weight_count, f.bits_per_weight, f.weight_bits, f.scale_bits, f.bits_total, f.macs_per_timestep
        )
        .unwrap();
        if let Some(set) = &eval_set {
            let names = m.config.classes.iter().map(|c| c.name().to_string()).collect();
            let r = amc_core::model::evaluate_with(set, names, |e| {
                Ok(argmax(&q.predict_values(&e.features)?))
            })?;
            let high = r.accuracy_at_or_above(cfg.eval.high_snr_db).unwrap_or(f64::NAN);
            writeln!(acc, "{s},{},{high}", r.overall_accuracy).unwrap();
            emit_report(&r, out, &format!("eval_{}", s.name().to_ascii_lowercase()))?;
            println!("{s:<7} overall {:.4}  high-SNR {high:.4}", r.overall_accuracy);
        }
    }
    write(&out.join("footprint.csv"), fp)?;
    if eval_set.is_some() {
        write(&out.join("quant_accuracy.csv"), acc)?;
    }
    Ok(())
}

pub fn gates(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let m = model(cfg)?;
    let ds = dataset(cfg)?;
    let idx = subset_indices(&ds, cfg, cfg.eval.subset)?;
    let th = Thresholds {
        left: cfg.gates.left,
        right: cfg.gates.right,
    };
    let mut index = String::from("frame,scheme,snr_db,steps\n");
    for &i in idx.iter().take(cfg.gates.frames) {
        let r = &ds.records[i];
        if m.config.class_index(r.scheme).is_none() {
            continue;
        }
        let seq = m.config.feature.extract(&r.samples_f64())?;
        let id = format!("frame{i}");
        emit_report(&gate_saturation(&m, &seq, th)?, out, &id)?;
        if cfg.gates.trace {
            emit_report(&activation_trace(&m, &seq)?, out, &id)?;
        }
        writeln!(index, "{i},{},{},{}", r.scheme, r.snr_db, seq.len()).unwrap();
    }
    write(&out.join("frames.csv"), index)
}

pub fn scan(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let ds = dataset(cfg)?;
    let mut vectors = Vec::with_capacity(ds.len());
    let mut labels = String::from("index,scheme,snr_db\n");
    for (i, r) in ds.records.iter().enumerate() {
        let psd = sequential_scan(&r.samples_f64(), &cfg.scan)
            .map_err(|e| CliError::Invalid(format!("frame {i}: {e}")))?;
        vectors.push(psd.bins);
        writeln!(labels, "{i},{},{}", r.scheme, r.snr_db).unwrap();
    }
    let p = out.join("psd.csv");
    let f = fs::File::create(&p).map_err(|e| CliError::io(&p, e))?;
    write_psd_csv(std::io::BufWriter::new(f), &vectors).map_err(|e| CliError::io(&p, e))?;
    write(&out.join("labels.csv"), labels)
}

pub fn bench(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    const WARNING: &str = "host timings are not comparable to embedded-platform figures";
    let m = model(cfg)?;
    let ds = dataset(cfg)?;
    let idx = subset_indices(&ds, cfg, cfg.eval.subset)?;
    let set = ExampleSet::from_dataset(&ds, &idx, &m.config)?;
    let frames: Vec<&[f64]> = set
        .examples
        .iter()
        .take(cfg.bench.frames)
        .map(|e| e.features.as_slice())
        .collect();
    if frames.is_empty() {
        return Err(CliError::Invalid("no frames to benchmark".into()));
    }
    let mut csv = String::from("scheme,frames,repeats,best_seconds,classifications_per_second\n");
    for &s in &cfg.bench.schemes {
        let q: QuantizedModel = quantize_with(&m, s, cfg.quant.threshold)?;
        let mut best = f64::INFINITY;
        for _ in 0..cfg.bench.repeats.max(1) {
            let t0 = Instant::now();
            for f in &frames {
                std::hint::black_box(q.predict_values(f)?);
            }
            best = best.min(t0.elapsed().as_secs_f64());
        }
        let rate = frames.len() as f64 / best;
        writeln!(csv, "{s},{},{},{best},{rate}", frames.len(), cfg.bench.repeats.max(1)).unwrap();
        println!("{s:<7} {rate:>10.1} classifications/s");
    }
    let host = format!(
        "os {}\narch {}\nlogical_cpus {}\nthreads 1\nnote {WARNING}\n",
        std::env::consts::OS,
        std::env::consts::ARCH,
        std::thread::available_parallelism().map_or(1, |n| n.get()),
    );
    eprintln!("warning: {WARNING}");
    write(&out.join("bench.csv"), csv)?;
    write(&out.join("host.txt"), host)
}

pub fn export_features(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let kind: FeatureKind = match (&cfg.export.feature, &cfg.model_path) {
        (Some(k), _) => k.clone(),
        (None, Some(_)) => model(cfg)?.config.feature,
        (None, None) => cfg.model.feature.clone(),
    };
    let ds = dataset(cfg)?;
    let idx = subset_indices(&ds, cfg, cfg.export.subset)?;
    let names: Vec<&str> = match kind {
        FeatureKind::AmpPhase => vec!["amplitude", "phase"],
        FeatureKind::Iq => vec!["i", "q"],
        FeatureKind::Psd { .. } => vec!["psd"],
    };
    let mut csv = format!("index,scheme,snr_db,t,{}\n", names.join(","));
    for &i in idx.iter().take(cfg.export.max_frames.unwrap_or(usize::MAX)) {
        let r = &ds.records[i];
        let seq = kind
            .extract(&r.samples_f64())
            .map_err(|e| CliError::Invalid(format!("frame {i}: {e}")))?;
        for (t, row) in seq.rows().enumerate() {
            let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(csv, "{i},{},{},{t},{}", r.scheme, r.snr_db, vals.join(",")).unwrap();
        }
    }
    write(&out.join("features.csv"), csv)
}

