//! Run configuration, training, evaluation, sweeps and reports.

pub mod config;
pub mod data;
pub mod metrics;
pub mod parallel;
pub mod report;
pub mod train;

pub use config::{ModalityMode, RunConfig, DEFAULT_LAMBDA_GRID};
pub use data::{
    assemble_batch, augment_parallel, check_samples, load_raw_dataset, preprocess_parallel,
    proportional_counts, write_raw_dataset, Dataset, InputNorm,
};
pub use metrics::{
    metrics_binary_depth, metrics_multiclass, ClassCounts, DepthCounts, DepthMetrics,
    MulticlassMetrics,
};
pub use parallel::{parallel_map, worker_threads, THREADS_ENV};
pub use report::{
    ablation_csv, curves_csv, find_reports, lambda_csv, load_report, metrics_json,
    write_evaluation, write_summary, HeadKind, MetricsReport, ABLATION_FILE, CURVES_FILE,
    METRICS_FILE, PREDICTIONS_DIR,
};
pub use train::{
    evaluate, report_split, sweep_lambda, train, EpochLosses, Evaluation, SamplePrediction,
    TrainedModel,
};
