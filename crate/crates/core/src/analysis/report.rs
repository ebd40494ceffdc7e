//! CSV emission. Values are written with Rust's shortest round-trip float
//! formatting, so parsing an emitted file recovers the exact `f64`s.
//!
//! Files written by [`emit_report`] for a run id `id`:
//!
//! | report           | file                    | header                                   |
//! |------------------|-------------------------|------------------------------------------|
//! | `EvalReport`     | `id_per_snr.csv`        | `snr_db,accuracy,correct,total`          |
//! |                  | `id_confusion.csv`      | `truth,<class names>` (row-normalized)   |
//! |                  | `id_confusion_counts.csv` | `truth,<class names>`                  |
//! | `GateSaturation` | `id_saturation.csv`     | `layer,cell,gate,left_frac,right_frac`   |
//! | `ActivationTrace`| `id_inputs.csv`         | `t,<input names>`                        |
//! |                  | `id_tanh_c_l{L}.csv`    | `t,c0,c1,…`                              |
//! |                  | `id_gates_l{L}.csv`     | `t,i0,…,f0,…,o0,…`                       |

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::EvalReport;

use super::{ActivationTrace, GateSaturation, Thresholds, TraceLayer, SAT_GATES};

/// Something that renders to one or more named CSV files.
pub trait CsvReport {
    /// `(file suffix, contents)` pairs; the suffix includes `.csv`.
    fn csv_files(&self) -> Vec<(String, String)>;
}

fn join<T: std::fmt::Display>(values: impl IntoIterator<Item = T>) -> String {
    let mut s = String::new();
    for (k, v) in values.into_iter().enumerate() {
        if k > 0 {
            s.push(',');
        }
        write!(s, "{v}").unwrap();
    }
    s
}

fn matrix_csv<T: std::fmt::Display>(names: &[String], rows: &[Vec<T>]) -> String {
    let mut s = format!("truth,{}\n", join(names));
    for (name, row) in names.iter().zip(rows) {
        writeln!(s, "{name},{}", join(row)).unwrap();
    }
    s
}

fn time_matrix_csv(header: &[String], width: usize, values: &[f64]) -> String {
    let mut s = format!("t,{}\n", join(header));
    for (t, row) in values.chunks_exact(width).enumerate() {
        writeln!(s, "{t},{}", join(row)).unwrap();
    }
    s
}

impl CsvReport for EvalReport {
    fn csv_files(&self) -> Vec<(String, String)> {
        let mut snr = String::from("snr_db,accuracy,correct,total\n");
        for r in &self.per_snr {
            writeln!(snr, "{},{},{},{}", r.snr_db, r.accuracy, r.correct, r.total).unwrap();
        }
        vec![
            ("per_snr.csv".into(), snr),
            ("confusion.csv".into(), matrix_csv(&self.class_names, &self.confusion)),
            (
                "confusion_counts.csv".into(),
                matrix_csv(&self.class_names, &self.confusion_counts),
            ),
        ]
    }
}

impl CsvReport for GateSaturation {
    fn csv_files(&self) -> Vec<(String, String)> {
        let mut s = String::from("layer,cell,gate,left_frac,right_frac\n");
        for (l, layer) in self.layers.iter().enumerate() {
            for (c, gates) in layer.iter().enumerate() {
                for (g, (left, right)) in gates.iter().enumerate() {
                    writeln!(s, "{l},{c},{},{left},{right}", SAT_GATES[g]).unwrap();
                }
            }
        }
        vec![("saturation.csv".into(), s)]
    }
}

impl CsvReport for ActivationTrace {
    fn csv_files(&self) -> Vec<(String, String)> {
        let mut out = vec![(
            "inputs.csv".into(),
            time_matrix_csv(&self.input_names, self.input_names.len().max(1), &self.inputs),
        )];
        for (l, layer) in self.layers.iter().enumerate() {
            let n = layer.cells;
            let cells: Vec<String> = (0..n).map(|k| format!("c{k}")).collect();
            let gates: Vec<String> = SAT_GATES
                .iter()
                .flat_map(|g| (0..n).map(move |k| format!("{g}{k}")))
                .collect();
            out.push((format!("tanh_c_l{l}.csv"), time_matrix_csv(&cells, n, &layer.tanh_c)));
            out.push((format!("gates_l{l}.csv"), time_matrix_csv(&gates, 3 * n, &layer.gates)));
        }
        out
    }
}

/// Writes every file of `report` into `dir` as `{run_id}_{suffix}` and
/// returns the paths written.
pub fn emit_report(report: &impl CsvReport, dir: &Path, run_id: &str) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    report
        .csv_files()
        .into_iter()
        .map(|(suffix, body)| {
            let p = dir.join(format!("{run_id}_{suffix}"));
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
            Ok(p)
        })
        .collect()
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::format(format!("not a number: {s:?}")))
}

fn lines(text: &str) -> Result<(Vec<&str>, impl Iterator<Item = Vec<&str>>)> {
    let mut it = text.lines().filter(|l| !l.trim().is_empty());
    let header = it
        .next()
        .ok_or_else(|| Error::format("empty CSV"))?
        .split(',')
        .collect();
    Ok((header, it.map(|l| l.split(',').collect())))
}

/// `(class names, matrix)` from a confusion CSV.
pub fn parse_confusion_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let (header, rows) = lines(text)?;
    if header.first() != Some(&"truth") {
        return Err(Error::format("confusion CSV must start with a truth column"));
    }
    let names: Vec<String> = header[1..].iter().map(|s| s.to_string()).collect();
    let mut m = Vec::new();
    for (k, row) in rows.enumerate() {
        if row.len() != names.len() + 1 || names.get(k).map(String::as_str) != Some(row[0]) {
            return Err(Error::format(format!("malformed confusion row {k}")));
        }
        m.push(row[1..].iter().map(|v| parse_f64(v)).collect::<Result<Vec<_>>>()?);
    }
    if m.len() != names.len() {
        return Err(Error::format("confusion matrix is not square"));
    }
    Ok((names, m))
}

/// `(snr_db, accuracy, correct, total)` rows.
pub fn parse_per_snr_csv(text: &str) -> Result<Vec<(f64, f64, usize, usize)>> {
    let (header, rows) = lines(text)?;
    if header != ["snr_db", "accuracy", "correct", "total"] {
        return Err(Error::format("unexpected per-SNR header"));
    }
    rows.map(|r| {
        if r.len() != 4 {
            return Err(Error::format("per-SNR row needs 4 fields"));
        }
        let count = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::format(format!("not a count: {s:?}")))
        };
        Ok((parse_f64(r[0])?, parse_f64(r[1])?, count(r[2])?, count(r[3])?))
    })
    .collect()
}

/// Rebuilds a [`GateSaturation`]; thresholds are not stored in the CSV.
pub fn parse_saturation_csv(text: &str, thresholds: Thresholds, steps: usize) -> Result<GateSaturation> {
    let (header, rows) = lines(text)?;
    if header != ["layer", "cell", "gate", "left_frac", "right_frac"] {
        return Err(Error::format("unexpected saturation header"));
    }
    let mut layers: Vec<Vec<[(f64, f64); 3]>> = Vec::new();
    for r in rows {
        if r.len() != 5 {
            return Err(Error::format("saturation row needs 5 fields"));
        }
        let idx = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::format(format!("not an index: {s:?}")))
        };
        let (l, c) = (idx(r[0])?, idx(r[1])?);
        let g = SAT_GATES
            .iter()
            .position(|&n| n == r[2])
            .ok_or_else(|| Error::format(format!("unknown gate {:?}", r[2])))?;
        if l > layers.len() || (l == layers.len() && c != 0) {
            return Err(Error::format("saturation rows out of order"));
        }
        if l == layers.len() {
            layers.push(Vec::new());
        }
        let layer = &mut layers[l];
        if c == layer.len() {
            layer.push([(0.0, 0.0); 3]);
        } else if c + 1 != layer.len() {
            return Err(Error::format("saturation rows out of order"));
        }
        layer[c][g] = (parse_f64(r[3])?, parse_f64(r[4])?);
    }
    Ok(GateSaturation {
        thresholds,
        steps,
        layers,
    })
}

/// `(column names without t, steps × width values)` from a time-indexed CSV.
pub fn parse_trace_csv(text: &str) -> Result<(Vec<String>, Vec<f64>)> {
    let (header, rows) = lines(text)?;
    if header.first() != Some(&"t") {
        return Err(Error::format("trace CSV must start with a t column"));
    }
    let names: Vec<String> = header[1..].iter().map(|s| s.to_string()).collect();
    let mut values = Vec::new();
    for (t, r) in rows.enumerate() {
        if r.len() != names.len() + 1 || r[0].trim() != t.to_string() {
            return Err(Error::format(format!("malformed trace row {t}")));
        }
        for v in &r[1..] {
            values.push(parse_f64(v)?);
        }
    }
    Ok((names, values))
}

impl ActivationTrace {
    /// Reads back the files written by [`emit_report`] for `run_id`.
    pub fn load_csv(dir: &Path, run_id: &str) -> Result<Self> {
        let read = |suffix: &str| {
            let p = dir.join(format!("{run_id}_{suffix}"));
            fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
        };
        let (input_names, inputs) = parse_trace_csv(&read("inputs.csv")?)?;
        let steps = inputs.len() / input_names.len().max(1);
        let mut layers = Vec::new();
        for l in 0.. {
            if !dir.join(format!("{run_id}_tanh_c_l{l}.csv")).exists() {
                break;
            }
            let (cells, tanh_c) = parse_trace_csv(&read(&format!("tanh_c_l{l}.csv"))?)?;
            let (gate_cols, gates) = parse_trace_csv(&read(&format!("gates_l{l}.csv"))?)?;
            let n = cells.len();
            if tanh_c.len() != steps * n || gate_cols.len() != 3 * n || gates.len() != steps * 3 * n {
                return Err(Error::format(format!("layer {l} trace has inconsistent shape")));
            }
            layers.push(TraceLayer {
                cells: n,
                tanh_c,
                gates,
            });
        }
        Ok(ActivationTrace {
            steps,
            input_names,
            inputs,
            layers,
        })
    }
}
