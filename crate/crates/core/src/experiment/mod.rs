//! Config-driven experiment harness behind the `noiseaware` binary.
//!
//! Every command takes plain values and returns a typed result; the binary
//! only parses arguments and prints.

mod commands;
mod config;
mod train;

pub use commands::{
    bar_chart, cmd_analyze_uncertainty, cmd_benchmark_time, cmd_compare, cmd_evaluate, cmd_generate, cmd_train,
    compare_records, evaluate_model, load_split, prepare_output_dir, replay, BenchmarkRow, Comparison,
    DatasetSummary, Evaluation, ImageUncertainty, LoadedSplit, PairedDiff, RunRecord, UncertaintyAnalysis,
    UncertaintySource, CHECKPOINT_FILE, RUN_RECORD_FILE,
};
pub use config::{DatasetSection, EvaluationConfig, ExperimentConfig, LossKind, MetricKind, TrainingConfig};
pub use train::{predict, train_model, trend, PredictMode, Prediction, TrainOutcome};
