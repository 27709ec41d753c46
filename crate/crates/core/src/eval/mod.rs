//! Experiment drivers: training setups, Leave-One-SuperTrial-Out
//! evaluation with optional nested tuning, F1 metrics, the gesture
//! divergence matrix and latency measurement.

mod kld;
mod latency;
mod loso;
mod metrics;
mod setup;

use thiserror::Error;

pub use kld::{
    channel_divergence, histogram, kl_divergence, kld_matrix, symmetric_kl, KldMatrix, KLD_BINS,
    KLD_MIN_SAMPLES, KLD_SMOOTHING,
};
pub use latency::{
    fresh_network, latency_bench, latency_csv, mean, percentile, LatencyReport, WARMUP_ITERATIONS,
};
pub use loso::{
    checkpoint_detector, fit_scope_stats, folds_by_repetition, instance_verdict, nested_tune,
    rebuild_reference_bank, run_folds, run_loso, run_loso_tuned, scope_instances, scope_windows,
    score_instances, train_scope_detector, unit_seed, ConstantStub, DetectorFactory, FoldResult,
    InstancePrediction, InstanceRef, LosoOptions, LosoReport, NearestCentroid,
    NearestCentroidFactory, NetworkDetector, NetworkFactory, OracleStub, SkippedUnit, TrainUnit,
    TuneResult, TuningGrid, WindowDetector, WindowPrediction,
};
pub use metrics::{compute_metrics, Confusion, FoldCounts, MetricsReport, ScopeMetrics};
pub use setup::TrainingSetup;

use crate::dataio::DataError;
use crate::models::ModelError;
use crate::preprocess::PreprocessError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("tuning grid is empty")]
    EmptyGrid,
    #[error("{0}")]
    Config(String),
}
