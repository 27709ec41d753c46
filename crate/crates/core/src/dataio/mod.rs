//! JIGSAWS-format readers, dataset assembly, LOSO fold splits and the
//! seeded synthetic dataset generator.
//!
//! Frame numbers in transcripts and label files are 1-based row numbers
//! of the kinematics file, inclusive on both ends.

mod kinematics;
mod labels;
mod loso;
mod manifest;
mod synth;
mod transcript;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kinematics::{
    orthonormality_error, parse_kinematics, parse_kinematics_str, write_kinematics, ColumnMap,
    PsmBlock,
};
pub use labels::{
    parse_error_labels, parse_error_labels_str, write_error_labels, LabelKey, LabelMap, LabelRecord,
};
pub use loso::{split_loso_folds, Fold, NUM_FOLDS};
pub use manifest::{assemble_dataset, assemble_task, DatasetManifest, InstanceCounts, Provenance};
pub use synth::{generate_synthetic, synthesize_trials, SyntheticConfig, DEFAULT_SEPARABILITY};
pub use transcript::{
    format_transcript, parse_transcript, parse_transcript_str, TranscriptSegment,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },
    #[error("{0}: file is empty")]
    Empty(String),
    #[error("{file}: segments {first} and {second} overlap")]
    Overlap {
        file: String,
        first: usize,
        second: usize,
    },
    #[error("duplicate label for {0}")]
    DuplicateLabel(String),
    #[error("unlabeled gesture instances: {0:?}")]
    Unlabeled(Vec<String>),
    #[error("label/transcript mismatch for {key}: {msg}")]
    LabelMismatch { key: String, msg: String },
    #[error("repetition index {0} outside 1..=5")]
    Repetition(u32),
    #[error("cannot form {NUM_FOLDS} folds: only repetitions {0:?} present")]
    TooFewRepetitions(Vec<u32>),
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error("duplicate trial {0}")]
    DuplicateTrial(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskClass {
    Suturing,
    NeedlePassing,
}

impl TaskClass {
    pub const ALL: [TaskClass; 2] = [TaskClass::Suturing, TaskClass::NeedlePassing];

    /// Folder and file-name prefix used in the JIGSAWS tree.
    pub fn dir_name(self) -> &'static str {
        match self {
            TaskClass::Suturing => "Suturing",
            TaskClass::NeedlePassing => "Needle_Passing",
        }
    }

    /// Prefix of trial identifiers in label files (`S_B001`, `NP_B001`).
    pub fn short(self) -> &'static str {
        match self {
            TaskClass::Suturing => "S",
            TaskClass::NeedlePassing => "NP",
        }
    }
}

impl fmt::Display for TaskClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskClass::Suturing => "Suturing",
            TaskClass::NeedlePassing => "NeedlePassing",
        })
    }
}

impl FromStr for TaskClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['_', '-', ' '], "").as_str() {
            "suturing" | "s" => Ok(TaskClass::Suturing),
            "needlepassing" | "np" => Ok(TaskClass::NeedlePassing),
            _ => Err(format!("unknown task {s:?}")),
        }
    }
}

/// Gesture library covered by the error rubric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GestureClass {
    G1,
    G2,
    G3,
    G4,
    G6,
    G8,
    G9,
}

impl GestureClass {
    pub const ALL: [GestureClass; 7] = [
        GestureClass::G1,
        GestureClass::G2,
        GestureClass::G3,
        GestureClass::G4,
        GestureClass::G6,
        GestureClass::G8,
        GestureClass::G9,
    ];

    /// Gestures used by default experiments; G8 and G9 are parsed but too
    /// rare to model.
    pub const MODELED: [GestureClass; 5] = [
        GestureClass::G1,
        GestureClass::G2,
        GestureClass::G3,
        GestureClass::G4,
        GestureClass::G6,
    ];

    pub fn number(self) -> u32 {
        match self {
            GestureClass::G1 => 1,
            GestureClass::G2 => 2,
            GestureClass::G3 => 3,
            GestureClass::G4 => 4,
            GestureClass::G6 => 6,
            GestureClass::G8 => 8,
            GestureClass::G9 => 9,
        }
    }

    pub fn from_number(n: u32) -> Option<Self> {
        GestureClass::ALL.into_iter().find(|g| g.number() == n)
    }

    /// Executional error modes commonly observed for this gesture.
    pub fn error_modes(self) -> &'static [ErrorMode] {
        use ErrorMode::*;
        match self {
            GestureClass::G1 | GestureClass::G3 | GestureClass::G9 => &[MultipleAttempts],
            GestureClass::G2 | GestureClass::G6 => &[MultipleAttempts, OutOfView],
            GestureClass::G4 | GestureClass::G8 => &[MultipleAttempts, NeedleOrientation],
        }
    }
}

impl fmt::Display for GestureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "G{}", self.number())
    }
}

impl FromStr for GestureClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match GestureTag::from_str(s)? {
            GestureTag::Supported(g) => Ok(g),
            GestureTag::Unsupported(n) => Err(format!("gesture G{n} is not in the library")),
        }
    }
}

/// A transcript gesture token: either in the library or retained with its
/// number but excluded from modeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GestureTag {
    Supported(GestureClass),
    Unsupported(u32),
}

impl GestureTag {
    pub fn supported(self) -> Option<GestureClass> {
        match self {
            GestureTag::Supported(g) => Some(g),
            GestureTag::Unsupported(_) => None,
        }
    }
}

impl fmt::Display for GestureTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GestureTag::Supported(g) => g.fmt(f),
            GestureTag::Unsupported(n) => write!(f, "G{n}"),
        }
    }
}

impl FromStr for GestureTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s
            .strip_prefix('G')
            .or_else(|| s.strip_prefix('g'))
            .ok_or_else(|| format!("gesture token {s:?} must look like G<k>"))?;
        let n: u32 = digits
            .parse()
            .map_err(|_| format!("gesture token {s:?} must look like G<k>"))?;
        Ok(GestureClass::from_number(n).map_or(GestureTag::Unsupported(n), GestureTag::Supported))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorMode {
    MultipleAttempts,
    OutOfView,
    NeedleOrientation,
}

impl ErrorMode {
    pub fn token(self) -> &'static str {
        match self {
            ErrorMode::MultipleAttempts => "multiple_attempts",
            ErrorMode::OutOfView => "out_of_view",
            ErrorMode::NeedleOrientation => "needle_orientation",
        }
    }
}

impl FromStr for ErrorMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "multiple_attempts" => Ok(ErrorMode::MultipleAttempts),
            "out_of_view" => Ok(ErrorMode::OutOfView),
            "needle_orientation" => Ok(ErrorMode::NeedleOrientation),
            _ => Err(format!("unknown error mode {s:?}")),
        }
    }
}

/// Subject letter plus repetition number; the repetition defines the super trial.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrialId {
    pub task: TaskClass,
    pub subject: String,
    pub repetition: u32,
}

impl TrialId {
    pub fn new(task: TaskClass, subject: impl Into<String>, repetition: u32) -> Self {
        Self {
            task,
            subject: subject.into(),
            repetition,
        }
    }

    /// `B001` style suffix shared by file names and label ids.
    pub fn suffix(&self) -> String {
        format!("{}{:03}", self.subject, self.repetition)
    }

    /// File stem in the JIGSAWS tree, e.g. `Suturing_B001`.
    pub fn file_stem(&self) -> String {
        format!("{}_{}", self.task.dir_name(), self.suffix())
    }

    /// Parse `B001` into subject and repetition.
    pub fn parse_suffix(task: TaskClass, suffix: &str) -> Option<Self> {
        let split = suffix.find(|c: char| c.is_ascii_digit())?;
        let (subject, rep) = suffix.split_at(split);
        if subject.is_empty() {
            return None;
        }
        Some(Self::new(task, subject, rep.parse().ok()?))
    }

    /// Accepts `S_B001`, `Suturing_B001` or bare `B001`.
    pub fn parse_label_id(task: TaskClass, id: &str) -> Option<Self> {
        let suffix = id.rsplit('_').next()?;
        Self::parse_suffix(task, suffix)
    }
}

impl fmt::Display for TrialId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.task.short(), self.suffix())
    }
}

/// Kinematics of one patient-side manipulator at one frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ArmSample {
    pub position: [f64; 3],
    /// Row-major rotation matrix.
    pub rotation: [[f64; 3]; 3],
    pub linear_velocity: [f64; 3],
    pub rotational_velocity: [f64; 3],
    pub gripper_angle: f64,
}

/// Both manipulators at one 30 Hz frame; index 0 is the left arm (PSM1).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RawKinematicSample {
    pub arms: [ArmSample; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct GestureInstance {
    pub gesture: GestureTag,
    /// 1-based inclusive frame range.
    pub start_frame: usize,
    pub end_frame: usize,
    /// `Some(true)` for erroneous; `None` only for unsupported gestures.
    pub error: Option<bool>,
    pub error_modes: Vec<ErrorMode>,
}

impl GestureInstance {
    pub fn len(&self) -> usize {
        self.end_frame + 1 - self.start_frame
    }

    pub fn is_empty(&self) -> bool {
        self.end_frame < self.start_frame
    }
}

/// One demonstration: kinematics plus its labeled gesture transcript.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub id: TrialId,
    pub samples: Vec<RawKinematicSample>,
    pub gestures: Vec<GestureInstance>,
}

impl TrialRecord {
    /// Samples covered by a gesture instance.
    pub fn instance_samples(&self, index: usize) -> &[RawKinematicSample] {
        let g = &self.gestures[index];
        &self.samples[g.start_frame - 1..g.end_frame]
    }
}
