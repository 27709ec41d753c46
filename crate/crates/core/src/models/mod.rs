//! The four detector architectures, Siamese pair construction, training,
//! majority-vote inference and the checkpoint format.

mod checkpoint;
mod config;
mod gradcheck;
mod inference;
mod network;
mod training;

use thiserror::Error;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint,
    CheckpointError, CheckpointInfo, CheckpointMeta, ManifestEntry, Scope, FORMAT_VERSION, MAGIC,
};
pub use config::{Architecture, ModelConfig};
pub use gradcheck::{
    check_architectures, check_layers, CheckResult, GRADCHECK_STEP, GRADCHECK_TOLERANCE,
    LAYER_CHECKS, SETTLE_TOLERANCE,
};
pub use inference::{
    detect, majority_vote, predict_probability, select_references, siamese_vote, DetectionResult,
    ReferenceBank, DECISION_THRESHOLD,
};
pub use network::{build_model, windows_tensor, Batch, Graph, Network};
pub use training::{
    make_training_pairs, train_model, PairMember, SiamesePair, TrainedModel, TrainingData,
};

use crate::ndgrad::GradError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error("need at least {needed} {class} windows, found {found}")]
    InsufficientWindows {
        class: &'static str,
        needed: usize,
        found: usize,
    },
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("empty reference set")]
    EmptyReferenceSet,
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("shape mismatch: {0}")]
    Shape(String),
}
