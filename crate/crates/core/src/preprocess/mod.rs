//! Feature extraction (76 raw columns to 26 channels), normalization,
//! downsampling and per-gesture-instance sliding windows.

mod euler;
mod features;
mod stats;
mod windows;

use thiserror::Error;

pub use euler::{euler_to_rotation, rotation_to_euler, EulerZyx, GIMBAL_EPS, ORTHONORMAL_HARD_TOL};
pub use features::{downsample, extract_feature_channels, sample_features, FeatureMatrix};
pub use stats::{
    denormalize, fit_channel_stats, normalize, ChannelStats, StatsAccumulator, STD_FLOOR,
};
pub use windows::{
    cut_windows, downsampled_instance, instance_windows, slide_gesture_windows, windows_to_csv,
    FeatureWindow, SkippedInstance, WindowConfig, WindowReport, WindowSource,
};

/// Feature channels per sample, 13 per arm.
pub const NUM_CHANNELS: usize = 26;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("rotation matrix is not orthonormal (deviation {0:.3e})")]
    NotOrthonormal(f64),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("downsample factor must be at least 1")]
    InvalidFactor,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid window config: {0}")]
    Config(String),
}
