use std::time::{Duration, Instant};

use super::MonitorError;
use crate::dataio::{GestureTag, RawKinematicSample, TrialRecord};

pub const FRAME_RATE_HZ: f64 = 30.0;

/// The transcript instance a frame belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceTag {
    /// 0-based transcript index.
    pub index: usize,
    pub gesture: GestureTag,
    pub start_frame: usize,
    pub end_frame: usize,
    /// Known label, when the transcript carries one.
    pub error: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamEvent {
    /// 1-based frame number.
    pub frame: usize,
    /// Arrival time.
    pub at: Instant,
    pub instance: Option<InstanceTag>,
    pub sample: RawKinematicSample,
}

/// Frames of one trial in order, paced at `rate × 30 Hz` against the
/// wall clock; rate 0 replays without sleeping.
pub struct ReplayStream<'a> {
    trial: &'a TrialRecord,
    period: Option<Duration>,
    start: Option<Instant>,
    next: usize,
    cursor: usize,
}

pub fn replay_stream(trial: &TrialRecord, rate: f64) -> Result<ReplayStream<'_>, MonitorError> {
    if !(rate.is_finite() && rate >= 0.0) {
        return Err(MonitorError::Rate(rate));
    }
    let period = (rate > 0.0).then(|| Duration::from_secs_f64(1.0 / (FRAME_RATE_HZ * rate)));
    Ok(ReplayStream {
        trial,
        period,
        start: None,
        next: 0,
        cursor: 0,
    })
}

impl ReplayStream<'_> {
    fn tag(&mut self, frame: usize) -> Option<InstanceTag> {
        let gs = &self.trial.gestures;
        while self.cursor < gs.len() && gs[self.cursor].end_frame < frame {
            self.cursor += 1;
        }
        let g = gs.get(self.cursor).filter(|g| g.start_frame <= frame)?;
        Some(InstanceTag {
            index: self.cursor,
            gesture: g.gesture,
            start_frame: g.start_frame,
            end_frame: g.end_frame,
            error: g.error,
        })
    }
}

impl Iterator for ReplayStream<'_> {
    type Item = StreamEvent;

    fn next(&mut self) -> Option<StreamEvent> {
        let sample = *self.trial.samples.get(self.next)?;
        let start = *self.start.get_or_insert_with(Instant::now);
        if let Some(p) = self.period {
            let due = start + p * self.next as u32;
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
        self.next += 1;
        let frame = self.next;
        let instance = self.tag(frame);
        Some(StreamEvent {
            frame,
            at: Instant::now(),
            instance,
            sample,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.trial.samples.len() - self.next;
        (left, Some(left))
    }
}
