use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::net::{bce_with_logits, one_hot, BaseNet, NetBatch, Scalar, Tensor};
use crate::optim::Adam;
use crate::pipeline::checkpoint::{Checkpoint, History, TrainingState};
use crate::pipeline::config::{Dtype, RunConfig};
use crate::pipeline::data::{assemble, prepare, Dataset, Stage};
use crate::pipeline::evaluate::{eval_batches, evaluate_batches, evaluate_snippets, tally};
use crate::util::{derive_seed, rng};

pub const METRICS_FILE: &str = "metrics.tsv";
pub const TEST_METRICS_FILE: &str = "test_metrics.tsv";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";

const SHUFFLE_STREAM: u64 = 10;
const SAMPLE_STREAM: u64 = 11;
const DROPOUT_STREAM: u64 = 12;
const INIT_STREAM: u64 = 13;

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub history: History,
    pub last_checkpoint: PathBuf,
    pub best_checkpoint: Option<PathBuf>,
    pub metrics_log: PathBuf,
}

impl TrainSummary {
    pub fn best_test(&self) -> Option<(usize, f64)> {
        self.history.best_test()
    }
}

/// `epoch  lr  mean_loss  train_acc`, one line per epoch, no header.
pub fn metrics_lines(history: &History) -> String {
    let mut s = String::new();
    for e in 0..history.epochs() {
        let _ = writeln!(
            s,
            "{e}\t{}\t{}\t{}",
            history.lr[e], history.loss[e], history.train_acc[e]
        );
    }
    s
}

fn test_lines(history: &History) -> String {
    let mut s = String::new();
    for (e, a) in history
        .test_acc
        .iter()
        .enumerate()
        .filter(|(_, a)| !a.is_nan())
    {
        let _ = writeln!(s, "{e}\t{a}");
    }
    s
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn first_non_finite<T: Scalar>(named: &[(String, &Tensor<T>)]) -> Option<String> {
    named
        .iter()
        .find(|(_, t)| !t.is_finite())
        .map(|(n, _)| n.clone())
}

/// Starts a fresh run.
pub fn train(config: &RunConfig) -> Result<TrainSummary> {
    train_from(config, None)
}

/// Continues from `resume` (which must come from a run with the same
/// configuration apart from `epochs`) or starts fresh.
pub fn train_from(config: &RunConfig, resume: Option<&Checkpoint>) -> Result<TrainSummary> {
    config.validate()?;
    match config.dtype {
        Dtype::F32 => train_typed::<f32>(config, resume),
        Dtype::F64 => train_typed::<f64>(config, resume),
    }
}

fn fresh_state<T: Scalar>(config: &RunConfig) -> Result<TrainingState<T>> {
    let net = BaseNet::<T>::new(config.net.clone(), derive_seed(config.seed, &[INIT_STREAM]))?;
    let shapes: Vec<Vec<usize>> = net
        .params()
        .iter()
        .map(|(_, t)| t.shape().to_vec())
        .collect();
    let refs: Vec<&[usize]> = shapes.iter().map(Vec::as_slice).collect();
    Ok(TrainingState {
        adam: Adam::new(config.optimizer, &refs),
        net,
        epoch: 0,
        history: History::default(),
    })
}

fn check_resume(config: &RunConfig, ck: &Checkpoint) -> Result<()> {
    let mut saved = ck.config()?;
    saved.epochs = config.epochs;
    saved.target_accuracy = config.target_accuracy;
    if saved != *config {
        return Err(Error::Checkpoint(
            "checkpoint was written by a different configuration (only epochs and target_accuracy may change)".into(),
        ));
    }
    Ok(())
}

const TEST_CACHE_BYTES: usize = 512 << 20;

fn test_set_bytes<T: Scalar>(config: &RunConfig, snippets: usize) -> Result<usize> {
    let (h, w) = config.resolved_resize()?;
    Ok(snippets * config.t * config.net.in_channels * h * w * std::mem::size_of::<T>())
}

fn train_typed<T: Scalar>(config: &RunConfig, resume: Option<&Checkpoint>) -> Result<TrainSummary> {
    let dataset = Dataset::open(config, true)?;
    if config.net.num_classes != dataset.classes.len() {
        return Err(Error::Dataset(format!(
            "net.num_classes = {} but the dataset has {} classes",
            config.net.num_classes,
            dataset.classes.len()
        )));
    }
    let train = dataset.load_split("train")?;
    if train.snippets.is_empty() {
        return Err(Error::Dataset("train split is empty".into()));
    }
    let test = if config.eval_each_epoch {
        Some(dataset.load_split("test")?).filter(|s| !s.snippets.is_empty())
    } else {
        None
    };
    // Eval preparation is deterministic, so small test sets are prepared once.
    let cached_test: Option<Vec<NetBatch<T>>> = match &test {
        Some(split) if test_set_bytes::<T>(config, split.snippets.len())? <= TEST_CACHE_BYTES => {
            Some(eval_batches::<T>(config, &split.snippets).collect::<Result<_>>()?)
        }
        _ => None,
    };
    let mut state = match resume {
        Some(ck) => {
            check_resume(config, ck)?;
            ck.to_state::<T>()?
        }
        None => fresh_state::<T>(config)?,
    };
    let out_dir = &config.output_dir;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let metrics_log = out_dir.join(METRICS_FILE);
    let last_path = out_dir.join(LAST_CHECKPOINT);
    let best_path = out_dir.join(BEST_CHECKPOINT);
    let reached = |h: &History| matches!((config.target_accuracy, h.test_acc.last()), (Some(t), Some(&a)) if a >= t);
    let k = dataset.classes.len();
    while state.epoch < config.epochs && !reached(&state.history) {
        let epoch = state.epoch;
        let lr = config.schedule.lr_at_epoch(epoch);
        let mut order: Vec<usize> = (0..train.snippets.len()).collect();
        order.shuffle(&mut rng(derive_seed(
            config.seed,
            &[SHUFFLE_STREAM, u64::from(epoch)],
        )));
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        let mut confusion = vec![vec![0u64; k]; k];
        let mut correct = 0u64;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let prepared = chunk
                .iter()
                .map(|&i| {
                    let seed =
                        derive_seed(config.seed, &[SAMPLE_STREAM, u64::from(epoch), i as u64]);
                    prepare(&train.snippets[i], config, Stage::Train, seed)
                })
                .collect::<Result<Vec<_>>>()?;
            let batch = assemble::<T>(&prepared)?;
            let dropout_seed =
                derive_seed(config.seed, &[DROPOUT_STREAM, u64::from(epoch), bi as u64]);
            let (out, cache) = state.net.forward_train(&batch, dropout_seed)?;
            if !out.logits.is_finite() {
                return Err(Error::NonFinite(format!(
                    "logits at epoch {epoch}, batch {bi}"
                )));
            }
            let labels: Vec<usize> = out.subjects.iter().map(|s| s.label).collect();
            let (loss, grad) = bce_with_logits(&out.logits, &one_hot::<T>(&labels, k))?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss at epoch {epoch}, batch {bi}"
                )));
            }
            let grads = state.net.backward(&cache, &grad)?;
            let names: Vec<String> = state.net.params().into_iter().map(|(n, _)| n).collect();
            let named: Vec<(String, &Tensor<T>)> =
                names.iter().cloned().zip(grads.iter()).collect();
            if let Some(name) = first_non_finite(&named) {
                return Err(Error::NonFinite(format!(
                    "gradient of {name} at epoch {epoch}, batch {bi}"
                )));
            }
            state.adam.step(&mut state.net.params_mut(), &grads, lr)?;
            if let Some(name) = first_non_finite(&state.net.params()) {
                return Err(Error::NonFinite(format!(
                    "parameter {name} after epoch {epoch}, batch {bi}"
                )));
            }
            correct += tally(&out, &mut confusion);
            loss_sum += loss;
            batches += 1;
        }
        let subjects: u64 = confusion.iter().flatten().sum();
        let test_acc = match &test {
            Some(split) => {
                let c = match &cached_test {
                    Some(batches) => evaluate_batches(&state.net, batches, &dataset.classes)?,
                    None => {
                        evaluate_snippets(&state.net, config, &split.snippets, &dataset.classes)?
                    }
                };
                let total: u64 = c.iter().flatten().sum();
                (0..k).map(|i| c[i][i]).sum::<u64>() as f64 / total as f64
            }
            None => f64::NAN,
        };
        state.epoch += 1;
        state.history.lr.push(lr);
        state.history.loss.push(loss_sum / batches as f64);
        state
            .history
            .train_acc
            .push(correct as f64 / subjects as f64);
        state.history.test_acc.push(test_acc);
        log::info!(
            "epoch {epoch}: lr {lr:e}, loss {:.5}, train acc {:.3}, test acc {test_acc:.3}",
            loss_sum / batches as f64,
            correct as f64 / subjects as f64
        );
        write(&metrics_log, &metrics_lines(&state.history))?;
        if test.is_some() {
            write(
                &out_dir.join(TEST_METRICS_FILE),
                &test_lines(&state.history),
            )?;
        }
        let ck = Checkpoint::from_state(config, &state);
        if state
            .history
            .best_test()
            .is_some_and(|(e, _)| e + 1 == state.history.epochs())
        {
            ck.save(&best_path)?;
        }
        ck.save(&last_path)?;
    }
    Ok(TrainSummary {
        best_checkpoint: best_path.exists().then_some(best_path),
        history: state.history,
        last_checkpoint: last_path,
        metrics_log,
    })
}
