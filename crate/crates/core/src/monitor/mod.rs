//! Runtime replay: frames are streamed at (a multiple of) 30 Hz, windows
//! are assembled online per gesture instance and each one is classified by
//! the model routed from its gesture tag.

mod assembler;
mod detect;
mod replay;

use thiserror::Error;

pub use assembler::{Assembled, FixedStats, StatsSource, WindowAssembler};
pub use detect::{
    event_json, run_monitor, stride_period_ms, DetectionEvent, MonitorModel, MonitorReport,
    MonitorSummary, Router, Verdict,
};
pub use replay::{replay_stream, InstanceTag, ReplayStream, StreamEvent, FRAME_RATE_HZ};

use crate::eval::EvalError;
use crate::models::ModelError;
use crate::preprocess::PreprocessError;

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("replay rate must be finite and non-negative, got {0}")]
    Rate(f64),
    #[error("no models loaded")]
    NoModels,
    #[error("models disagree on the window configuration")]
    WindowMismatch,
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("event sink: {0}")]
    Sink(String),
}
