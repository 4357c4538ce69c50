//! Training, reconstruction, evaluation and sampler benchmarking.
//!
//! * [`train`] fits a backbone on a [`Dataset`](crate::data::Dataset) with
//!   Adam and keeps the parameters with the best validation loss.
//! * [`reconstruct`] turns a partial cloud into a dense completed cloud.
//! * [`evaluate`] scores reconstructions by voxel Jaccard similarity.
//! * [`bench_samplers`] compares gradient sampling with dense grid evaluation.

mod bench;
mod eval;
mod train;

pub use bench::{bench_samplers, BenchReport, GradientBench, GridBench, BENCH_REPORT_KEYS};
pub use eval::{
    evaluate, reconstruct, EvalConfig, EvalReport, Reconstruction, SampleEval, SplitSummary, Timing,
};
pub use train::{train, train_from, write_curve_csv, Adam, EpochRecord, TrainConfig, TrainOutcome};
