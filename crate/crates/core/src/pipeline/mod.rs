//! Training, evaluation, checkpoints, fusion dumps, gradient checks and the
//! flow-cost benchmark.

mod bench;
mod checkpoint;
mod config;
mod data;
mod evaluate;
mod fuse;
mod gradcheck;
mod train;

pub use bench::{bench, parse_resolutions, BenchReport, BenchRow};
pub use checkpoint::{ArrayData, Checkpoint, History, TrainingState, FORMAT_VERSION, MAGIC};
pub use config::{Dtype, RunConfig, RunMode, DEFAULT_RESIZE};
pub use data::{assemble, is_identity_fusion, prepare, Dataset, Prepared, Split, Stage};
pub use evaluate::{argmax, evaluate, evaluate_snippets, evaluate_with, MetricsReport};
pub use fuse::{fuse_dump, fused_file_name, map_to_raw, FuseDump, MAP_FILE};
pub use gradcheck::{
    gradcheck, gradcheck_with, Backwards, GradcheckEntry, GradcheckReport, END_TO_END_THRESHOLD,
    OPS, PER_OP_THRESHOLD,
};
pub use train::{
    metrics_lines, train, train_from, TrainSummary, BEST_CHECKPOINT, LAST_CHECKPOINT, METRICS_FILE,
    TEST_METRICS_FILE,
};
