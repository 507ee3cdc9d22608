use std::fmt::Write as _;

use serde::Serialize;

use crate::dataio::Snippet;
use crate::error::{Error, Result};
use crate::net::{BaseNet, NetBatch, NetOutput, Scalar};
use crate::pipeline::checkpoint::Checkpoint;
use crate::pipeline::config::{Dtype, RunConfig};
use crate::pipeline::data::{assemble, prepare, Dataset, Stage};
use crate::util::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub classes: Vec<String>,
    pub accuracy: f64,
    /// `None` for classes without test subjects.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// Rows are true classes, columns predictions.
    pub confusion: Vec<Vec<u64>>,
    pub loss_curve: Vec<f64>,
}

impl MetricsReport {
    pub fn from_confusion(
        classes: Vec<String>,
        confusion: Vec<Vec<u64>>,
        loss_curve: Vec<f64>,
    ) -> Self {
        let total: u64 = confusion.iter().flatten().sum();
        let trace: u64 = (0..confusion.len()).map(|i| confusion[i][i]).sum();
        let per_class_accuracy = confusion
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let n: u64 = row.iter().sum();
                (n > 0).then(|| row[i] as f64 / n as f64)
            })
            .collect();
        Self {
            classes,
            accuracy: if total == 0 {
                0.0
            } else {
                trace as f64 / total as f64
            },
            per_class_accuracy,
            confusion,
            loss_curve,
        }
    }

    pub fn subjects(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "accuracy\t{:.4}\t({} subjects)",
            self.accuracy,
            self.subjects()
        );
        for (name, acc) in self.classes.iter().zip(&self.per_class_accuracy) {
            match acc {
                Some(a) => {
                    let _ = writeln!(s, "class {name}\t{a:.4}");
                }
                None => {
                    let _ = writeln!(s, "class {name}\t-");
                }
            }
        }
        let _ = writeln!(s, "confusion (rows: true, columns: predicted)");
        for (name, row) in self.classes.iter().zip(&self.confusion) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(s, "{name}\t{}", cells.join("\t"));
        }
        s
    }
}

/// Index of the largest logit; the first wins on ties.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, T::neg_infinity()), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}

/// Adds `(true, predicted)` counts of one batch output.
pub fn tally<T: Scalar>(out: &NetOutput<T>, confusion: &mut [Vec<u64>]) -> u64 {
    let k = out.logits.dim(1);
    let mut correct = 0;
    for (i, s) in out.subjects.iter().enumerate() {
        let pred = argmax(&out.logits.data()[i * k..(i + 1) * k]);
        confusion[s.label][pred] += 1;
        correct += u64::from(pred == s.label);
    }
    correct
}

/// Inference over `snippets` with center sampling and running statistics.
pub fn evaluate_snippets<T: Scalar>(
    net: &BaseNet<T>,
    config: &RunConfig,
    snippets: &[Snippet],
    classes: &[String],
) -> Result<Vec<Vec<u64>>> {
    check_classes(net, classes)?;
    let mut confusion = vec![vec![0u64; classes.len()]; classes.len()];
    for batch in eval_batches::<T>(config, snippets) {
        tally(&net.predict(&batch?)?, &mut confusion);
    }
    Ok(confusion)
}

fn check_classes<T: Scalar>(net: &BaseNet<T>, classes: &[String]) -> Result<()> {
    if net.config().num_classes != classes.len() {
        return Err(Error::Dataset(format!(
            "model has {} classes, dataset has {}",
            net.config().num_classes,
            classes.len()
        )));
    }
    Ok(())
}

/// Evaluation batches in order. Eval preparation is deterministic, so callers may cache these.
pub(crate) fn eval_batches<'a, T: Scalar>(
    config: &'a RunConfig,
    snippets: &'a [Snippet],
) -> impl Iterator<Item = Result<NetBatch<T>>> + 'a {
    snippets
        .chunks(config.batch_size)
        .enumerate()
        .map(move |(bi, chunk)| {
            let prepared = chunk
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    prepare(
                        s,
                        config,
                        Stage::Eval,
                        derive_seed(config.seed, &[EVAL_STREAM, bi as u64, j as u64]),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            assemble::<T>(&prepared)
        })
}

/// Scores pre-assembled batches.
pub(crate) fn evaluate_batches<T: Scalar>(
    net: &BaseNet<T>,
    batches: &[NetBatch<T>],
    classes: &[String],
) -> Result<Vec<Vec<u64>>> {
    check_classes(net, classes)?;
    let mut confusion = vec![vec![0u64; classes.len()]; classes.len()];
    for batch in batches {
        tally(&net.predict(batch)?, &mut confusion);
    }
    Ok(confusion)
}

const EVAL_STREAM: u64 = 40;

fn evaluate_typed<T: Scalar>(
    checkpoint: &Checkpoint,
    config: &RunConfig,
    split: &str,
) -> Result<MetricsReport> {
    let state = checkpoint.to_state::<T>()?;
    let dataset = Dataset::open(config, false)?;
    let data = dataset.load_split(split)?;
    if data.snippets.is_empty() {
        return Err(Error::Dataset(format!("split {split} is empty")));
    }
    let confusion = evaluate_snippets(&state.net, config, &data.snippets, &dataset.classes)?;
    Ok(MetricsReport::from_confusion(
        dataset.classes,
        confusion,
        state.history.loss,
    ))
}

/// Scores a checkpoint on a split of the dataset named in its own config.
pub fn evaluate(checkpoint: &Checkpoint, split: &str) -> Result<MetricsReport> {
    evaluate_with(checkpoint, &checkpoint.config()?, split)
}

/// As [`evaluate`], but with an overriding configuration (for instance a
/// different dataset root).
pub fn evaluate_with(
    checkpoint: &Checkpoint,
    config: &RunConfig,
    split: &str,
) -> Result<MetricsReport> {
    match config.dtype {
        Dtype::F32 => evaluate_typed::<f32>(checkpoint, config, split),
        Dtype::F64 => evaluate_typed::<f64>(checkpoint, config, split),
    }
}
