use std::fmt::Write as _;
use std::sync::mpsc;
use std::time::Instant;

use serde::Serialize;

use super::assembler::{Assembled, StatsSource, WindowAssembler};
use super::replay::{replay_stream, FRAME_RATE_HZ};
use super::MonitorError;
use crate::dataio::{GestureClass, TaskClass, TrialRecord};
use crate::eval::{checkpoint_detector, mean, percentile, NetworkDetector, WindowDetector};
use crate::models::{Checkpoint, Scope};
use crate::preprocess::{ChannelStats, FeatureWindow, WindowConfig};

/// One loaded checkpoint ready for streaming detection.
pub struct MonitorModel {
    pub scope: Scope,
    /// Gestures the model was trained on; others pass unmonitored.
    pub gestures: Vec<GestureClass>,
    pub stats: ChannelStats,
    pub window: WindowConfig,
    pub detector: NetworkDetector,
}

impl MonitorModel {
    /// `trials` must contain the checkpoint's training trials when it is Siamese.
    pub fn from_checkpoint(
        checkpoint: &Checkpoint,
        trials: &[TrialRecord],
    ) -> Result<Self, MonitorError> {
        Ok(Self {
            scope: checkpoint.meta.info.scope,
            gestures: checkpoint.meta.info.gestures.clone(),
            stats: checkpoint.meta.info.channel_stats.clone(),
            window: checkpoint.meta.info.window,
            detector: checkpoint_detector(checkpoint, trials)?,
        })
    }
}

/// Routes each incoming gesture to the most specific model whose scope
/// contains it and that was trained on that gesture.
pub struct Router {
    models: Vec<MonitorModel>,
    window: WindowConfig,
}

fn specificity(s: &Scope) -> usize {
    usize::from(s.task.is_some()) + usize::from(s.gesture.is_some())
}

impl Router {
    pub fn new(models: Vec<MonitorModel>) -> Result<Self, MonitorError> {
        let window = models.first().ok_or(MonitorError::NoModels)?.window;
        if models.iter().any(|m| m.window != window) {
            return Err(MonitorError::WindowMismatch);
        }
        Ok(Self { models, window })
    }

    pub fn window(&self) -> &WindowConfig {
        &self.window
    }

    pub fn models(&self) -> &[MonitorModel] {
        &self.models
    }

    pub fn route(&self, task: TaskClass, gesture: GestureClass) -> Option<&MonitorModel> {
        self.models
            .iter()
            .filter(|m| m.scope.contains(task, gesture) && m.gestures.contains(&gesture))
            .max_by_key(|m| specificity(&m.scope))
    }
}

impl StatsSource for Router {
    fn stats_for(&self, task: TaskClass, gesture: GestureClass) -> Option<&ChannelStats> {
        self.route(task, gesture).map(|m| &m.stats)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Normal,
    Erroneous,
    Unmonitored,
    Skipped,
}

/// One line of the event stream.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionEvent {
    /// Raw frame at which the window (or flag) became available.
    pub frame: usize,
    pub gesture: String,
    pub verdict: Verdict,
    /// Probability or vote fraction; absent for flags.
    pub score: Option<f64>,
    /// Window complete → verdict, including queueing.
    pub latency_ms: f64,
    /// Model time alone.
    pub model_ms: f64,
    pub trial: String,
    pub gesture_index: usize,
    pub offset: Option<usize>,
    pub padded: bool,
    /// Verdict later than one stride period after the window completed.
    pub realtime_violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorSummary {
    pub trial: String,
    pub rate: f64,
    pub frames: usize,
    pub windows: usize,
    pub unmonitored: usize,
    pub skipped: usize,
    pub mean_latency_ms: f64,
    pub p95_latency_ms: f64,
    pub max_latency_ms: f64,
    pub mean_model_ms: f64,
    pub p95_model_ms: f64,
    /// Real-time stride period at this rate; 0 when unpaced.
    pub stride_period_ms: f64,
    pub violations: usize,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone)]
pub struct MonitorReport {
    pub events: Vec<DetectionEvent>,
    pub windows: Vec<FeatureWindow>,
    pub summary: MonitorSummary,
}

/// Stride period in milliseconds at a replay rate: stride × factor frames.
pub fn stride_period_ms(cfg: &WindowConfig, rate: f64) -> f64 {
    if rate > 0.0 {
        (cfg.stride * cfg.downsample_factor) as f64 / FRAME_RATE_HZ / rate * 1e3
    } else {
        0.0
    }
}

impl MonitorSummary {
    /// Recompute from emitted events.
    pub fn from_events(
        trial: &str,
        rate: f64,
        frames: usize,
        period_ms: f64,
        events: &[DetectionEvent],
        elapsed_s: f64,
    ) -> Self {
        let scored: Vec<&DetectionEvent> = events
            .iter()
            .filter(|e| matches!(e.verdict, Verdict::Normal | Verdict::Erroneous))
            .collect();
        let lat: Vec<f64> = scored.iter().map(|e| e.latency_ms).collect();
        let model: Vec<f64> = scored.iter().map(|e| e.model_ms).collect();
        let or0 = |v: f64| if v.is_nan() { 0.0 } else { v };
        Self {
            trial: trial.to_string(),
            rate,
            frames,
            windows: scored.len(),
            unmonitored: events
                .iter()
                .filter(|e| e.verdict == Verdict::Unmonitored)
                .count(),
            skipped: events
                .iter()
                .filter(|e| e.verdict == Verdict::Skipped)
                .count(),
            mean_latency_ms: or0(mean(&lat)),
            p95_latency_ms: or0(percentile(&lat, 0.95)),
            max_latency_ms: lat.iter().copied().fold(0.0, f64::max),
            mean_model_ms: or0(mean(&model)),
            p95_model_ms: or0(percentile(&model, 0.95)),
            stride_period_ms: period_ms,
            violations: events.iter().filter(|e| e.realtime_violation).count(),
            elapsed_s,
        }
    }

    pub fn csv_header() -> &'static str {
        "trial,rate,frames,windows,unmonitored,skipped,mean_latency_ms,p95_latency_ms,max_latency_ms,mean_model_ms,p95_model_ms,stride_period_ms,violations,elapsed_s"
    }

    pub fn csv_row(&self) -> String {
        let mut out = String::new();
        write!(
            out,
            "{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{:.3}",
            self.trial,
            self.rate,
            self.frames,
            self.windows,
            self.unmonitored,
            self.skipped,
            self.mean_latency_ms,
            self.p95_latency_ms,
            self.max_latency_ms,
            self.mean_model_ms,
            self.p95_model_ms,
            self.stride_period_ms,
            self.violations,
            self.elapsed_s
        )
        .unwrap();
        out
    }
}

enum Message {
    Item(Assembled, Instant),
    Failed(MonitorError),
}

/// Replay a trial through two stages joined by an unbounded ordered queue:
/// the replay thread assembles windows, the calling thread detects and
/// hands each event to `sink` as soon as it is decided.
pub fn run_monitor(
    trial: &TrialRecord,
    router: &Router,
    rate: f64,
    sink: &mut dyn FnMut(&DetectionEvent) -> Result<(), MonitorError>,
) -> Result<MonitorReport, MonitorError> {
    let stream = replay_stream(trial, rate)?;
    let mut assembler = WindowAssembler::new(trial.id.clone(), *router.window(), router)?;
    let period_ms = stride_period_ms(router.window(), rate);
    let trial_name = trial.id.to_string();
    let started = Instant::now();
    let (tx, rx) = mpsc::channel::<Message>();
    std::thread::scope(|scope| {
        scope.spawn(move || {
            for ev in stream {
                match assembler.push(&ev) {
                    Ok(items) => {
                        for a in items {
                            if tx.send(Message::Item(a, ev.at)).is_err() {
                                return;
                            }
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Message::Failed(e));
                        return;
                    }
                }
            }
        });
        let mut events = Vec::new();
        let mut windows = Vec::new();
        for msg in rx {
            let (item, ready) = match msg {
                Message::Item(a, at) => (a, at),
                Message::Failed(e) => return Err(e),
            };
            let flag = |frame: usize, gesture_index: usize, gesture: String, verdict: Verdict| {
                DetectionEvent {
                    frame,
                    gesture,
                    verdict,
                    score: None,
                    latency_ms: ready.elapsed().as_secs_f64() * 1e3,
                    model_ms: 0.0,
                    trial: trial_name.clone(),
                    gesture_index,
                    offset: None,
                    padded: false,
                    realtime_violation: false,
                }
            };
            let event = match item {
                Assembled::Window { window, frame } => {
                    let model = router
                        .route(window.task, window.gesture)
                        .expect("the assembler only windows routed gestures");
                    let d = model.detector.detect(&window)?;
                    let latency_ms = ready.elapsed().as_secs_f64() * 1e3;
                    let e = DetectionEvent {
                        frame,
                        gesture: window.gesture.to_string(),
                        verdict: if d.erroneous {
                            Verdict::Erroneous
                        } else {
                            Verdict::Normal
                        },
                        score: Some(d.score),
                        latency_ms,
                        model_ms: d.elapsed_ms,
                        trial: trial_name.clone(),
                        gesture_index: window.source.gesture_index,
                        offset: Some(window.source.offset),
                        padded: window.padded,
                        realtime_violation: period_ms > 0.0 && latency_ms > period_ms,
                    };
                    windows.push(window);
                    e
                }
                Assembled::Skipped {
                    gesture_index,
                    frame,
                    ..
                } => {
                    let g = trial.gestures[gesture_index - 1].gesture.to_string();
                    flag(frame, gesture_index, g, Verdict::Skipped)
                }
                Assembled::Unmonitored {
                    gesture_index,
                    gesture,
                    frame,
                } => flag(
                    frame,
                    gesture_index,
                    gesture.to_string(),
                    Verdict::Unmonitored,
                ),
            };
            sink(&event)?;
            events.push(event);
        }
        let summary = MonitorSummary::from_events(
            &trial_name,
            rate,
            trial.samples.len(),
            period_ms,
            &events,
            started.elapsed().as_secs_f64(),
        );
        Ok(MonitorReport {
            events,
            windows,
            summary,
        })
    })
}

/// JSON Lines rendering of one event.
pub fn event_json(e: &DetectionEvent) -> String {
    serde_json::to_string(e).expect("events serialize")
}
