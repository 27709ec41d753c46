use std::fmt::Write as _;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{
    downsample, extract_feature_channels, normalize, ChannelStats, FeatureMatrix, PreprocessError,
    NUM_CHANNELS,
};
use crate::dataio::{GestureClass, TaskClass, TrialId, TrialRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window_length: usize,
    pub stride: usize,
    pub downsample_factor: usize,
    /// Shortest downsampled instance that is padded into one window.
    pub min_padded_length: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_length: 30,
            stride: 20,
            downsample_factor: 2,
            min_padded_length: 10,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if self.window_length == 0
            || self.stride == 0
            || self.downsample_factor == 0
            || self.min_padded_length == 0
        {
            return Err(PreprocessError::Config(
                "window parameters must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Start offsets (in downsampled samples) of the windows cut from an
    /// instance of downsampled length `len`.
    pub fn offsets(&self, len: usize) -> Vec<usize> {
        if len >= self.window_length {
            (0..=len - self.window_length)
                .step_by(self.stride)
                .collect()
        } else if len >= self.min_padded_length {
            vec![0]
        } else {
            Vec::new()
        }
    }

    /// Downsampled length of an instance spanning `raw_len` frames.
    pub fn downsampled_len(&self, raw_len: usize) -> usize {
        raw_len.div_ceil(self.downsample_factor)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WindowSource {
    pub trial: TrialId,
    /// 1-based index of the gesture instance in the transcript.
    pub gesture_index: usize,
    /// Start offset in downsampled samples.
    pub offset: usize,
}

/// One `26 × 30` network input with its context tags and label.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    /// Channel-major values.
    pub data: Vec<f64>,
    pub gesture: GestureClass,
    pub task: TaskClass,
    /// `true` for erroneous.
    pub label: bool,
    pub padded: bool,
    pub source: WindowSource,
}

impl FeatureWindow {
    pub fn length(&self) -> usize {
        self.data.len() / NUM_CHANNELS
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedInstance {
    pub trial: TrialId,
    pub gesture_index: usize,
    pub downsampled_len: usize,
}

#[derive(Debug, Clone, Default)]
pub struct WindowReport {
    pub windows: Vec<FeatureWindow>,
    pub skipped: Vec<SkippedInstance>,
}

/// Slice, extract and downsample one gesture instance (not yet normalized).
pub fn downsampled_instance(
    trial: &TrialRecord,
    index: usize,
    cfg: &WindowConfig,
) -> Result<FeatureMatrix, PreprocessError> {
    let m = extract_feature_channels(trial.instance_samples(index))?;
    downsample(&m, cfg.downsample_factor)
}

/// Cut windows out of a normalized, downsampled instance matrix.
pub fn cut_windows(m: &FeatureMatrix, cfg: &WindowConfig) -> Vec<(usize, Vec<f64>, bool)> {
    let len = m.len();
    let wl = cfg.window_length;
    cfg.offsets(len)
        .into_iter()
        .map(|off| {
            let mut data = Vec::with_capacity(NUM_CHANNELS * wl);
            for c in 0..NUM_CHANNELS {
                let ch = m.channel(c);
                for t in 0..wl {
                    data.push(ch[(off + t).min(len - 1)]);
                }
            }
            (off, data, off + wl > len)
        })
        .collect()
}

/// Windows of a single labeled, supported gesture instance.
pub fn instance_windows(
    trial: &TrialRecord,
    index: usize,
    stats: &ChannelStats,
    cfg: &WindowConfig,
) -> Result<Vec<FeatureWindow>, PreprocessError> {
    let inst = &trial.gestures[index];
    let (Some(gesture), Some(label)) = (inst.gesture.supported(), inst.error) else {
        return Ok(Vec::new());
    };
    let m = normalize(&downsampled_instance(trial, index, cfg)?, stats);
    Ok(cut_windows(&m, cfg)
        .into_iter()
        .map(|(offset, data, padded)| FeatureWindow {
            data,
            gesture,
            task: trial.id.task,
            label,
            padded,
            source: WindowSource {
                trial: trial.id.clone(),
                gesture_index: index + 1,
                offset,
            },
        })
        .collect())
}

/// Per-instance pipeline over a whole trial: slice → 26 channels →
/// downsample → normalize → windows. Unsupported or unlabeled instances
/// are ignored; instances too short to pad are reported as skipped.
pub fn slide_gesture_windows(
    trial: &TrialRecord,
    stats: &ChannelStats,
    cfg: &WindowConfig,
) -> Result<WindowReport, PreprocessError> {
    cfg.validate()?;
    let mut report = WindowReport::default();
    for (i, inst) in trial.gestures.iter().enumerate() {
        if inst.gesture.supported().is_none() || inst.error.is_none() {
            continue;
        }
        let ws = instance_windows(trial, i, stats, cfg)?;
        if ws.is_empty() {
            let downsampled_len = cfg.downsampled_len(inst.len());
            warn!(
                "{} gesture {}: {downsampled_len} downsampled samples, too short for a window",
                trial.id,
                i + 1
            );
            report.skipped.push(SkippedInstance {
                trial: trial.id.clone(),
                gesture_index: i + 1,
                downsampled_len,
            });
        }
        report.windows.extend(ws);
    }
    Ok(report)
}

/// Debug dump: one row per (window, channel) with the window's samples.
pub fn windows_to_csv(windows: &[FeatureWindow]) -> String {
    let wl = windows.first().map_or(0, FeatureWindow::length);
    let mut out = String::from("trial,gesture_index,offset,gesture,task,label,channel");
    for t in 0..wl {
        write!(out, ",v{t}").unwrap();
    }
    out.push('\n');
    for w in windows {
        let len = w.length();
        for c in 0..NUM_CHANNELS {
            write!(
                out,
                "{},{},{},{},{},{},{}",
                w.source.trial,
                w.source.gesture_index,
                w.source.offset,
                w.gesture,
                w.task,
                u8::from(w.label),
                c + 1
            )
            .unwrap();
            for v in &w.data[c * len..(c + 1) * len] {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
    }
    out
}
