use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::kinematics::{write_kinematics, ColumnMap};
use super::labels::{write_error_labels, LabelKey, LabelMap, LabelRecord};
use super::manifest::{assemble_dataset, task_dirs, SYNTHETIC_MARKER};
use super::transcript::{format_transcript, TranscriptSegment};
use super::{
    ArmSample, DataError, DatasetManifest, ErrorMode, GestureClass, GestureInstance, GestureTag,
    RawKinematicSample, TaskClass, TrialId, TrialRecord,
};
use crate::preprocess::{euler_to_rotation, EulerZyx};
use crate::rng::{derive_seed, seeded};

/// Error-injection scale δ at which the nearest-centroid baseline lands in
/// its calibration band for seed 7.
pub const DEFAULT_SEPARABILITY: f64 = 6.0;

const FRAME_RATE: f64 = 30.0;
/// Per arm: position xyz, Euler yaw/pitch/roll, gripper.
const QUANTITIES: usize = 14;
const HARMONICS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub subjects: Vec<String>,
    pub repetitions: u32,
    pub tasks: Vec<TaskClass>,
    /// Probability that a gesture instance is erroneous.
    pub error_rate: f64,
    /// δ: scale of every injected error effect.
    pub separability: f64,
    /// Gaussian noise relative to each quantity's motion amplitude.
    pub noise: f64,
    /// Probability that a trial also contains a G8 and a G9 instance.
    pub optional_gesture_rate: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            subjects: ["B", "C", "D", "E"].map(String::from).to_vec(),
            repetitions: 5,
            tasks: TaskClass::ALL.to_vec(),
            error_rate: 0.4,
            separability: DEFAULT_SEPARABILITY,
            noise: 0.05,
            optional_gesture_rate: 0.25,
        }
    }
}

impl SyntheticConfig {
    /// Default config with enough subjects (B, C, ...) for `trials` trials.
    pub fn with_trials(trials: usize) -> Result<Self, DataError> {
        let base = Self::default();
        let per_subject = base.repetitions as usize * base.tasks.len();
        if trials == 0 || !trials.is_multiple_of(per_subject) || trials / per_subject > 25 {
            return Err(DataError::Config(format!(
                "trial count must be a positive multiple of {per_subject} (at most {})",
                25 * per_subject
            )));
        }
        let subjects = (0..trials / per_subject)
            .map(|i| char::from(b'B' + i as u8).to_string())
            .collect();
        Ok(Self { subjects, ..base })
    }

    pub fn num_trials(&self) -> usize {
        self.subjects.len() * self.repetitions as usize * self.tasks.len()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.error_rate) {
            return bad("error rate must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.optional_gesture_rate) {
            return bad("optional gesture rate must lie in [0, 1]");
        }
        if !(self.separability.is_finite() && self.separability >= 0.0) {
            return bad("separability must be finite and non-negative");
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return bad("noise must be finite and non-negative");
        }
        if !(1..=5).contains(&self.repetitions) {
            return bad("repetitions must lie in 1..=5");
        }
        if self.subjects.is_empty() || self.tasks.is_empty() {
            return bad("need at least one subject and one task");
        }
        let mut subjects = self.subjects.clone();
        subjects.sort();
        subjects.dedup();
        if subjects.len() != self.subjects.len()
            || self
                .subjects
                .iter()
                .any(|s| s.is_empty() || !s.chars().all(|c| c.is_ascii_alphabetic()))
        {
            return bad("subjects must be unique alphabetic identifiers");
        }
        let mut tasks = self.tasks.clone();
        tasks.sort();
        tasks.dedup();
        if tasks.len() != self.tasks.len() {
            return bad("tasks must be unique");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Harmonic {
    amp: f64,
    freq: f64,
    phase: f64,
}

/// Clean motion pattern of one (task, gesture).
#[derive(Debug, Clone)]
struct Template {
    base: [f64; QUANTITIES],
    harmonics: Vec<[Harmonic; HARMONICS]>,
    mean_len: f64,
    drift_dir: [[f64; 3]; 2],
    drift_arm: usize,
    tilt: [f64; 3],
    tilt_arm: usize,
}

/// Motion scale per quantity kind: position (m), angle (rad), gripper (rad).
fn scale(q: usize) -> f64 {
    match q % 7 {
        0..=2 => 0.015,
        3..=5 => 0.25,
        _ => 0.3,
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn unit3(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let v = [normal(rng), normal(rng), normal(rng)];
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.map(|x| x / n)
}

fn mean_length(g: GestureClass) -> f64 {
    match g {
        GestureClass::G1 => 70.0,
        GestureClass::G2 => 80.0,
        GestureClass::G3 => 100.0,
        GestureClass::G4 => 72.0,
        GestureClass::G6 => 90.0,
        GestureClass::G8 => 60.0,
        GestureClass::G9 => 48.0,
    }
}

fn gesture_template(seed: u64, g: GestureClass) -> Template {
    let mut rng = seeded(derive_seed(seed, &[0x7e, u64::from(g.number())]));
    let mut base = [0.0; QUANTITIES];
    let mut harmonics = Vec::with_capacity(QUANTITIES);
    for (q, b) in base.iter_mut().enumerate() {
        let s = scale(q);
        *b = match q % 7 {
            0..=2 => rng.random_range(-0.05..0.05),
            4 => rng.random_range(-0.4..0.4),
            3 | 5 => rng.random_range(-0.8..0.8),
            _ => rng.random_range(0.4..0.8),
        };
        harmonics.push(std::array::from_fn(|h| Harmonic {
            amp: s * rng.random_range(0.3..1.0) / (h + 1) as f64,
            freq: (h + 1) as f64 * rng.random_range(0.6..1.4),
            phase: rng.random_range(0.0..TAU),
        }));
    }
    Template {
        base,
        harmonics,
        mean_len: mean_length(g),
        drift_dir: [unit3(&mut rng), unit3(&mut rng)],
        drift_arm: rng.random_range(0..2),
        tilt: unit3(&mut rng),
        tilt_arm: rng.random_range(0..2),
    }
}

/// Task-specific variant of a gesture template.
fn task_template(seed: u64, g: GestureClass, task: TaskClass) -> Template {
    let mut t = gesture_template(seed, g);
    let mut rng = seeded(derive_seed(
        seed,
        &[0x7a, u64::from(g.number()), task as u64],
    ));
    for (q, hs) in t.harmonics.iter_mut().enumerate() {
        t.base[q] += 0.2 * scale(q) * normal(&mut rng);
        for h in hs.iter_mut() {
            h.amp *= 1.0 + 0.15 * normal(&mut rng);
            h.phase += 0.3 * normal(&mut rng);
        }
    }
    t.mean_len *= 1.0 + 0.1 * normal(&mut rng);
    t
}

/// Per-subject style: amplitude, phase and offset jitter per quantity.
#[derive(Debug, Clone)]
struct Style {
    amp: [f64; QUANTITIES],
    phase: [f64; QUANTITIES],
    offset: [f64; QUANTITIES],
    speed: f64,
}

fn subject_style(seed: u64, subject: &str) -> Style {
    let key = subject
        .bytes()
        .fold(0u64, |h, b| h.wrapping_mul(131).wrapping_add(u64::from(b)));
    let mut rng = seeded(derive_seed(seed, &[0x5b, key]));
    Style {
        amp: std::array::from_fn(|_| 1.0 + 0.1 * normal(&mut rng)),
        phase: std::array::from_fn(|_| 0.2 * normal(&mut rng)),
        offset: std::array::from_fn(|q| 0.1 * scale(q) * normal(&mut rng)),
        speed: 1.0 + 0.1 * normal(&mut rng),
    }
}

/// One rendered gesture instance: 14 quantities per frame plus its error modes.
struct Rendered {
    frames: Vec<[f64; QUANTITIES]>,
    modes: Vec<ErrorMode>,
}

fn gaussian_bump(x: f64, center: f64, width: f64) -> f64 {
    (-0.5 * ((x - center) / width).powi(2)).exp()
}

fn render_instance(
    t: &Template,
    style: &Style,
    modes: &[ErrorMode],
    cfg: &SyntheticConfig,
    rng: &mut ChaCha8Rng,
) -> Rendered {
    let delta = cfg.separability;
    let len = ((t.mean_len / style.speed) * (1.0 + 0.12 * normal(rng)))
        .round()
        .clamp(24.0, 400.0) as usize;
    let amp_j: [f64; QUANTITIES] = std::array::from_fn(|_| 1.0 + 0.08 * normal(rng));
    let phase_j = 0.15 * normal(rng);

    // phase u in [0,1] per frame with an amplitude multiplier; MultipleAttempts
    // replays a stretch of the motion with larger amplitude.
    let mut timeline: Vec<(f64, f64)> = (0..len)
        .map(|i| (i as f64 / (len - 1) as f64, 1.0))
        .collect();
    let mut regrasp = None;
    if modes.contains(&ErrorMode::MultipleAttempts) {
        let w = rng.random_range(0.2..0.35);
        let s = rng.random_range(0.1..0.9 - w);
        let i0 = (s * (len - 1) as f64) as usize;
        let i1 = ((s + w) * (len - 1) as f64) as usize;
        let gain = 1.0 + 0.5 * delta;
        let replay: Vec<(f64, f64)> = timeline[i0..=i1].iter().map(|&(u, _)| (u, gain)).collect();
        regrasp = Some(i1 + 1);
        timeline.splice(i1 + 1..i1 + 1, replay);
    }
    let n = timeline.len();

    let mut frames = vec![[0.0; QUANTITIES]; n];
    for (frame, &(u, gain)) in frames.iter_mut().zip(&timeline) {
        for q in 0..QUANTITIES {
            let osc: f64 = t.harmonics[q]
                .iter()
                .map(|h| h.amp * (TAU * h.freq * u + h.phase + style.phase[q] + phase_j).sin())
                .sum();
            frame[q] = t.base[q] + style.offset[q] + gain * style.amp[q] * amp_j[q] * osc;
        }
    }
    if let Some(at) = regrasp {
        let width = 6.0;
        for (i, frame) in frames.iter_mut().enumerate() {
            let b = 0.25 * delta * gaussian_bump(i as f64, at as f64, width);
            frame[6] += b;
            frame[13] += b;
        }
    }
    if modes.contains(&ErrorMode::OutOfView) {
        let start = rng.random_range(0.2..0.6) * (n - 1) as f64;
        let dir = t.drift_dir[t.drift_arm];
        let jitter = unit3(rng);
        let mut d = [0.0; 3];
        for k in 0..3 {
            d[k] = dir[k] + 0.3 * jitter[k];
        }
        let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        let span = (n - 1) as f64 - start;
        for (i, frame) in frames.iter_mut().enumerate() {
            let r = ((i as f64 - start) / span.max(1.0)).clamp(0.0, 1.0);
            for k in 0..3 {
                frame[t.drift_arm * 7 + k] += 0.03 * delta * r * d[k] / norm;
            }
        }
    }
    if modes.contains(&ErrorMode::NeedleOrientation) {
        let center = rng.random_range(0.3..0.7) * (n - 1) as f64;
        let width = 0.15 * n as f64;
        let mag = 0.35 * delta * (1.0 + 0.2 * normal(rng));
        for (i, frame) in frames.iter_mut().enumerate() {
            let b = mag * gaussian_bump(i as f64, center, width);
            for k in 0..3 {
                frame[t.tilt_arm * 7 + 3 + k] += b * t.tilt[k];
            }
        }
    }
    for frame in &mut frames {
        for (q, v) in frame.iter_mut().enumerate() {
            *v += cfg.noise * scale(q) * normal(rng);
        }
    }
    Rendered {
        frames,
        modes: modes.to_vec(),
    }
}

/// Convert quantity frames to samples; velocities are finite differences at 30 Hz.
fn to_samples(frames: &[[f64; QUANTITIES]]) -> Vec<RawKinematicSample> {
    let n = frames.len();
    let deriv = |i: usize, q: usize| -> f64 {
        if n < 2 {
            return 0.0;
        }
        let (a, b, dt) = match i {
            0 => (0, 1, 1.0),
            _ if i == n - 1 => (n - 2, n - 1, 1.0),
            _ => (i - 1, i + 1, 2.0),
        };
        (frames[b][q] - frames[a][q]) * FRAME_RATE / dt
    };
    (0..n)
        .map(|i| {
            let f = &frames[i];
            let arm = |a: usize| {
                let o = a * 7;
                ArmSample {
                    position: [f[o], f[o + 1], f[o + 2]],
                    rotation: euler_to_rotation(EulerZyx {
                        yaw: f[o + 3],
                        pitch: f[o + 4],
                        roll: f[o + 5],
                    }),
                    linear_velocity: [deriv(i, o), deriv(i, o + 1), deriv(i, o + 2)],
                    rotational_velocity: [deriv(i, o + 3), deriv(i, o + 4), deriv(i, o + 5)],
                    gripper_angle: f[o + 6],
                }
            };
            RawKinematicSample {
                arms: [arm(0), arm(1)],
            }
        })
        .collect()
}

fn gesture_sequence(rng: &mut ChaCha8Rng, cfg: &SyntheticConfig) -> Vec<GestureClass> {
    use GestureClass::*;
    let mut seq = vec![G1, G2, G3, G6, G4];
    if rng.random_bool(cfg.optional_gesture_rate) {
        seq.insert(4, G8);
        seq.push(G9);
    }
    seq
}

fn synthesize_trial(
    cfg: &SyntheticConfig,
    seed: u64,
    id: &TrialId,
    templates: &BTreeMap<(TaskClass, GestureClass), Template>,
    style: &Style,
) -> (TrialRecord, Vec<ErrorMode>) {
    let key = id
        .subject
        .bytes()
        .fold(0u64, |h, b| h.wrapping_mul(131).wrapping_add(u64::from(b)));
    let mut rng = seeded(derive_seed(
        seed,
        &[0x71, id.task as u64, key, u64::from(id.repetition)],
    ));
    let mut frames: Vec<[f64; QUANTITIES]> = Vec::new();
    let mut gestures = Vec::new();
    let mut all_modes = Vec::new();
    let hold = |frames: &mut Vec<[f64; QUANTITIES]>, first: [f64; QUANTITIES], count: usize| {
        let last = frames.last().copied().unwrap_or(first);
        frames.extend(std::iter::repeat_n(last, count));
    };
    for g in gesture_sequence(&mut rng, cfg) {
        let t = &templates[&(id.task, g)];
        let erroneous = rng.random_bool(cfg.error_rate);
        let modes: Vec<ErrorMode> = if erroneous {
            let options = g.error_modes();
            vec![options[rng.random_range(0..options.len())]]
        } else {
            Vec::new()
        };
        let r = render_instance(t, style, &modes, cfg, &mut rng);
        let gap = if frames.is_empty() {
            rng.random_range(10..25)
        } else {
            rng.random_range(0..6)
        };
        hold(&mut frames, r.frames[0], gap);
        let start = frames.len() + 1;
        frames.extend_from_slice(&r.frames);
        gestures.push(GestureInstance {
            gesture: GestureTag::Supported(g),
            start_frame: start,
            end_frame: frames.len(),
            error: Some(erroneous),
            error_modes: r.modes.clone(),
        });
        all_modes.extend(r.modes);
    }
    let tail = rng.random_range(10..25);
    let last = *frames.last().expect("at least one gesture");
    hold(&mut frames, last, tail);
    (
        TrialRecord {
            id: id.clone(),
            samples: to_samples(&frames),
            gestures,
        },
        all_modes,
    )
}

/// Generate the trials in memory, in (task, subject, repetition) order.
pub fn synthesize_trials(cfg: &SyntheticConfig, seed: u64) -> Result<Vec<TrialRecord>, DataError> {
    cfg.validate()?;
    let mut templates = BTreeMap::new();
    for &task in &cfg.tasks {
        for g in GestureClass::ALL {
            templates.insert((task, g), task_template(seed, g, task));
        }
    }
    let mut trials = Vec::with_capacity(cfg.num_trials());
    for &task in &cfg.tasks {
        for subject in &cfg.subjects {
            let style = subject_style(seed, subject);
            for rep in 1..=cfg.repetitions {
                let id = TrialId::new(task, subject.clone(), rep);
                trials.push(synthesize_trial(cfg, seed, &id, &templates, &style).0);
            }
        }
    }
    Ok(trials)
}

fn write_file(path: &Path, contents: &str) -> Result<(), DataError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| DataError::io(path, e))
}

/// Write a synthetic dataset in JIGSAWS layout under `out` (plus
/// `labels.csv` and a marker file) and load it back.
pub fn generate_synthetic(
    cfg: &SyntheticConfig,
    seed: u64,
    out: &Path,
) -> Result<DatasetManifest, DataError> {
    let trials = synthesize_trials(cfg, seed)?;
    let columns = ColumnMap::default();
    let mut labels = LabelMap::new();
    for t in &trials {
        let (kin_dir, tr_dir) = task_dirs(out, t.id.task);
        let stem = t.id.file_stem();
        write_file(
            &kin_dir.join(format!("{stem}.txt")),
            &write_kinematics(&t.samples, &columns),
        )?;
        let segments: Vec<TranscriptSegment> = t
            .gestures
            .iter()
            .map(|g| TranscriptSegment {
                start_frame: g.start_frame,
                end_frame: g.end_frame,
                gesture: g.gesture,
            })
            .collect();
        write_file(
            &tr_dir.join(format!("{stem}.txt")),
            &format_transcript(&segments),
        )?;
        for (i, g) in t.gestures.iter().enumerate() {
            labels.insert(
                LabelKey {
                    trial: t.id.clone(),
                    gesture_index: i + 1,
                },
                LabelRecord {
                    start_frame: g.start_frame,
                    end_frame: g.end_frame,
                    gesture: g.gesture,
                    error: g.error.unwrap_or(false),
                    error_modes: g.error_modes.clone(),
                },
            );
        }
    }
    let labels_path = out.join("labels.csv");
    write_file(&labels_path, &write_error_labels(&labels))?;
    let marker = serde_json::json!({
        "seed": seed,
        "config": cfg,
        "tool_version": env!("CARGO_PKG_VERSION"),
    });
    write_file(
        &out.join(SYNTHETIC_MARKER),
        &serde_json::to_string_pretty(&marker).expect("serializable"),
    )?;
    assemble_dataset(out, &labels_path)
}
