use log::warn;

use super::replay::{InstanceTag, StreamEvent};
use super::MonitorError;
use crate::dataio::{GestureClass, GestureTag, TaskClass, TrialId};
use crate::preprocess::{
    sample_features, ChannelStats, FeatureWindow, WindowConfig, WindowSource, NUM_CHANNELS,
};

/// Normalization statistics per incoming gesture; `None` means no model
/// watches that gesture.
pub trait StatsSource {
    fn stats_for(&self, task: TaskClass, gesture: GestureClass) -> Option<&ChannelStats>;
}

/// The same statistics for every gesture.
pub struct FixedStats(pub ChannelStats);

impl StatsSource for FixedStats {
    fn stats_for(&self, _: TaskClass, _: GestureClass) -> Option<&ChannelStats> {
        Some(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Assembled {
    /// A window, complete at raw frame `frame`.
    Window { window: FeatureWindow, frame: usize },
    /// An instance that ended too short for a window.
    Skipped {
        gesture_index: usize,
        downsampled_len: usize,
        frame: usize,
    },
    /// The first frame of an instance no model watches.
    Unmonitored {
        gesture_index: usize,
        gesture: GestureTag,
        frame: usize,
    },
}

struct Buffer<'s> {
    tag: InstanceTag,
    gesture: GestureClass,
    stats: &'s ChannelStats,
    /// Normalized downsampled columns.
    columns: Vec<[f64; NUM_CHANNELS]>,
    raw: usize,
    next_offset: usize,
    emitted: usize,
}

/// Online version of the per-instance windowing pipeline: the same
/// features, downsampling, normalization, offsets and padding, emitted as
/// soon as the last contributing frame arrives.
pub struct WindowAssembler<'s, S: StatsSource + ?Sized> {
    trial: TrialId,
    cfg: WindowConfig,
    stats: &'s S,
    current: Option<Buffer<'s>>,
    /// Instance index last seen, to flag each unmonitored instance once.
    last_index: Option<usize>,
}

impl<'s, S: StatsSource + ?Sized> WindowAssembler<'s, S> {
    pub fn new(trial: TrialId, cfg: WindowConfig, stats: &'s S) -> Result<Self, MonitorError> {
        cfg.validate()?;
        Ok(Self {
            trial,
            cfg,
            stats,
            current: None,
            last_index: None,
        })
    }

    fn window(&self, b: &Buffer<'_>, offset: usize) -> FeatureWindow {
        let wl = self.cfg.window_length;
        let len = b.columns.len();
        let mut data = Vec::with_capacity(NUM_CHANNELS * wl);
        for c in 0..NUM_CHANNELS {
            for t in 0..wl {
                data.push(b.columns[(offset + t).min(len - 1)][c]);
            }
        }
        FeatureWindow {
            data,
            gesture: b.gesture,
            task: self.trial.task,
            label: b.tag.error == Some(true),
            padded: offset + wl > len,
            source: WindowSource {
                trial: self.trial.clone(),
                gesture_index: b.tag.index + 1,
                offset,
            },
        }
    }

    pub fn push(&mut self, ev: &StreamEvent) -> Result<Vec<Assembled>, MonitorError> {
        let mut out = Vec::new();
        let Some(tag) = ev.instance else {
            return Ok(out);
        };
        let first = self.last_index != Some(tag.index);
        self.last_index = Some(tag.index);
        if first {
            // a fresh instance replaces any buffer left by a truncated stream
            self.current = None;
            let Some(g) = tag.gesture.supported() else {
                out.push(Assembled::Unmonitored {
                    gesture_index: tag.index + 1,
                    gesture: tag.gesture,
                    frame: ev.frame,
                });
                return Ok(out);
            };
            match self.stats.stats_for(self.trial.task, g) {
                Some(stats) => {
                    self.current = Some(Buffer {
                        tag,
                        gesture: g,
                        stats,
                        columns: Vec::new(),
                        raw: 0,
                        next_offset: 0,
                        emitted: 0,
                    })
                }
                None => {
                    out.push(Assembled::Unmonitored {
                        gesture_index: tag.index + 1,
                        gesture: tag.gesture,
                        frame: ev.frame,
                    });
                    return Ok(out);
                }
            }
        }
        let Some(mut b) = self.current.take() else {
            return Ok(out);
        };
        if b.raw % self.cfg.downsample_factor == 0 {
            let f = sample_features(&ev.sample)?;
            b.columns
                .push(std::array::from_fn(|c| b.stats.normalize_value(c, f[c])));
            let wl = self.cfg.window_length;
            if b.columns.len() == b.next_offset + wl {
                out.push(Assembled::Window {
                    window: self.window(&b, b.next_offset),
                    frame: ev.frame,
                });
                b.next_offset += self.cfg.stride;
                b.emitted += 1;
            }
        }
        b.raw += 1;
        if ev.frame >= tag.end_frame {
            let len = b.columns.len();
            if b.emitted == 0 {
                if len >= self.cfg.min_padded_length {
                    out.push(Assembled::Window {
                        window: self.window(&b, 0),
                        frame: ev.frame,
                    });
                } else {
                    warn!(
                        "{} gesture {}: {len} downsampled samples, too short for a window",
                        self.trial,
                        tag.index + 1
                    );
                    out.push(Assembled::Skipped {
                        gesture_index: tag.index + 1,
                        downsampled_len: len,
                        frame: ev.frame,
                    });
                }
            }
        } else {
            self.current = Some(b);
        }
        Ok(out)
    }
}
