use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::argmax;

use super::{train, ClassifierConfig, Example, ExampleSet, TrainConfig, TrainedModel};

/// One classified example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub label: usize,
    pub predicted: usize,
    pub snr_db: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrAccuracy {
    pub snr_db: f64,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub class_names: Vec<String>,
    pub overall_accuracy: f64,
    /// Ascending SNR.
    pub per_snr: Vec<SnrAccuracy>,
    /// `counts[truth][predicted]`.
    pub confusion_counts: Vec<Vec<usize>>,
    /// Row-normalized counts; a class with no examples has an all-zero row.
    pub confusion: Vec<Vec<f64>>,
    pub outcomes: Vec<Outcome>,
}

impl EvalReport {
    pub fn from_outcomes(class_names: Vec<String>, outcomes: Vec<Outcome>) -> Result<Self> {
        let k = class_names.len();
        let mut counts = vec![vec![0usize; k]; k];
        for o in &outcomes {
            if o.label >= k || o.predicted >= k {
                return Err(Error::Index {
                    index: o.label.max(o.predicted),
                    len: k,
                });
            }
            counts[o.label][o.predicted] += 1;
        }
        let confusion = counts
            .iter()
            .map(|row| {
                let n: usize = row.iter().sum();
                row.iter()
                    .map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 })
                    .collect()
            })
            .collect();
        let mut snrs: Vec<f64> = outcomes.iter().map(|o| o.snr_db).collect();
        snrs.sort_by(f64::total_cmp);
        snrs.dedup();
        let per_snr = snrs
            .into_iter()
            .map(|s| {
                let (correct, total) = outcomes
                    .iter()
                    .filter(|o| o.snr_db == s)
                    .fold((0, 0), |(c, t), o| (c + usize::from(o.label == o.predicted), t + 1));
                SnrAccuracy {
                    snr_db: s,
                    correct,
                    total,
                    accuracy: correct as f64 / total as f64,
                }
            })
            .collect();
        let correct = outcomes.iter().filter(|o| o.label == o.predicted).count();
        let overall_accuracy = if outcomes.is_empty() {
            0.0
        } else {
            correct as f64 / outcomes.len() as f64
        };
        Ok(Self {
            class_names,
            overall_accuracy,
            per_snr,
            confusion_counts: counts,
            confusion,
            outcomes,
        })
    }

    /// Accuracy over the outcomes selected by `keep`; `None` if none match.
    pub fn accuracy_where(&self, keep: impl Fn(&Outcome) -> bool) -> Option<f64> {
        let (c, t) = self
            .outcomes
            .iter()
            .filter(|o| keep(o))
            .fold((0usize, 0usize), |(c, t), o| (c + usize::from(o.label == o.predicted), t + 1));
        (t > 0).then(|| c as f64 / t as f64)
    }

    pub fn accuracy_at_or_above(&self, snr_min: f64) -> Option<f64> {
        self.accuracy_where(|o| o.snr_db >= snr_min)
    }
}

/// Classifies every example with `predict` (in parallel) and tabulates.
pub fn evaluate_with<F>(set: &ExampleSet, class_names: Vec<String>, predict: F) -> Result<EvalReport>
where
    F: Fn(&Example) -> Result<usize> + Sync,
{
    let outcomes = set
        .examples
        .par_iter()
        .map(|e| {
            Ok(Outcome {
                label: e.label,
                predicted: predict(e)?,
                snr_db: e.snr_db,
                steps: e.steps,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_outcomes(class_names, outcomes)
}

pub fn evaluate(model: &TrainedModel, set: &ExampleSet) -> Result<EvalReport> {
    if set.input_dim != model.config.input_dim() {
        return Err(Error::Shape {
            what: "feature width",
            expected: model.config.input_dim(),
            got: set.input_dim,
        });
    }
    let names = model.config.classes.iter().map(|c| c.name().to_string()).collect();
    evaluate_with(set, names, |e| Ok(argmax(&model.predict_values(&e.features)?)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub depth: usize,
    pub cells: usize,
    pub accuracy: f64,
}

/// Trains one model per `(depth, cells)` pair with shared seeds and reports
/// test accuracy at SNR ≥ `snr_min_eval`.
pub fn sweep(
    depths: &[usize],
    cells: &[usize],
    train_set: &ExampleSet,
    test_set: &ExampleSet,
    base: &ClassifierConfig,
    tcfg: &TrainConfig,
    snr_min_eval: f64,
) -> Result<Vec<SweepRow>> {
    if depths.is_empty() || cells.is_empty() {
        return Err(Error::config("sweep needs at least one depth and one cell count"));
    }
    let mut rows = Vec::with_capacity(depths.len() * cells.len());
    for &d in depths {
        for &c in cells {
            let cfg = ClassifierConfig {
                depth: d,
                cells: c,
                ..base.clone()
            };
            let m = train(train_set, &cfg, tcfg, |_| {})?;
            let r = evaluate(&m, test_set)?;
            rows.push(SweepRow {
                depth: d,
                cells: c,
                accuracy: r.accuracy_at_or_above(snr_min_eval).unwrap_or(0.0),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn balanced(k: usize, per_class: usize) -> ExampleSet {
        let mut examples = Vec::new();
        for label in 0..k {
            for j in 0..per_class {
                examples.push(Example {
                    features: vec![examples.len() as f64, 0.0],
                    steps: 1,
                    label,
                    snr_db: [-10.0, 0.0, 10.0][j % 3],
                });
            }
        }
        ExampleSet {
            input_dim: 2,
            classes: k,
            examples,
            dataset_digest: None,
        }
    }

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn oracle_predictor() {
        let set = balanced(11, 30);
        let r = evaluate_with(&set, names(11), |e| Ok(e.label)).unwrap();
        assert_eq!(r.overall_accuracy, 1.0);
        for (i, row) in r.confusion.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, if i == j { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(r.per_snr.len(), 3);
        assert_eq!(r.per_snr[0].snr_db, -10.0);
    }

    #[test]
    fn uniform_random_predictor_is_at_chance() {
        let set = balanced(11, 1000);
        // Seeded by the example's position so the parallel map stays pure.
        let r = evaluate_with(&set, names(11), |e| {
            Ok(ChaCha8Rng::seed_from_u64(e.features[0] as u64).random_range(0..11))
        })
        .unwrap();
        assert!((r.overall_accuracy - 1.0 / 11.0).abs() < 0.01, "{}", r.overall_accuracy);
        for row in &r.confusion {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        // Overall accuracy equals the prior-weighted diagonal.
        let total: usize = r.confusion_counts.iter().flatten().sum();
        let weighted: f64 = (0..11)
            .map(|i| {
                let n: usize = r.confusion_counts[i].iter().sum();
                r.confusion[i][i] * n as f64 / total as f64
            })
            .sum();
        assert!((weighted - r.overall_accuracy).abs() < 1e-12);
    }

    #[test]
    fn filtered_accuracy() {
        let set = balanced(2, 3);
        let r = evaluate_with(&set, names(2), |e| Ok(if e.snr_db > 0.0 { e.label } else { 1 - e.label }))
            .unwrap();
        assert_eq!(r.accuracy_at_or_above(5.0), Some(1.0));
        assert_eq!(r.accuracy_at_or_above(-20.0), Some(2.0 / 6.0));
        assert_eq!(r.accuracy_at_or_above(50.0), None);
    }

    #[test]
    fn out_of_range_prediction() {
        let set = balanced(2, 1);
        assert!(evaluate_with(&set, names(2), |_| Ok(5)).is_err());
    }
}
