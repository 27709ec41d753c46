use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use super::kinematics::{parse_kinematics, ColumnMap};
use super::labels::{parse_error_labels, LabelKey, LabelMap};
use super::transcript::parse_transcript;
use super::{
    DataError, GestureClass, GestureInstance, GestureTag, TaskClass, TrialId, TrialRecord,
};

/// Marker file written into synthetic dataset roots.
pub const SYNTHETIC_MARKER: &str = "synthetic.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Real,
    Synthetic { seed: u64 },
}

/// Total and erroneous gesture-instance counts per (task, gesture).
pub type InstanceCounts = BTreeMap<(TaskClass, GestureClass), (usize, usize)>;

#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub trials: Vec<TrialRecord>,
    pub provenance: Provenance,
    /// Files that were skipped, with the reason.
    pub skipped: Vec<String>,
}

impl DatasetManifest {
    pub fn instance_counts(&self) -> InstanceCounts {
        let mut counts = InstanceCounts::new();
        for t in &self.trials {
            for g in &t.gestures {
                if let (GestureTag::Supported(gc), Some(err)) = (g.gesture, g.error) {
                    let e = counts.entry((t.id.task, gc)).or_insert((0, 0));
                    e.0 += 1;
                    e.1 += usize::from(err);
                }
            }
        }
        counts
    }

    /// `(total, erroneous)` summed over the given gestures of one task.
    pub fn task_totals(&self, task: TaskClass, gestures: &[GestureClass]) -> (usize, usize) {
        self.instance_counts()
            .iter()
            .filter(|((t, g), _)| *t == task && gestures.contains(g))
            .fold((0, 0), |acc, (_, (n, e))| (acc.0 + n, acc.1 + e))
    }

    pub fn trial(&self, id: &TrialId) -> Option<&TrialRecord> {
        self.trials.iter().find(|t| &t.id == id)
    }
}

fn sorted_txt_files(dir: &Path) -> Result<Vec<PathBuf>, DataError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| DataError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    Ok(files)
}

/// Join kinematics, transcripts and labels for one task.
pub fn assemble_task(
    task: TaskClass,
    kin_dir: &Path,
    transcript_dir: &Path,
    labels: &LabelMap,
    columns: &ColumnMap,
) -> Result<(Vec<TrialRecord>, Vec<String>), DataError> {
    let mut trials = Vec::new();
    let mut skipped = Vec::new();
    let mut unlabeled = Vec::new();
    let prefix = format!("{}_", task.dir_name());
    for kin_path in sorted_txt_files(kin_dir)? {
        let stem = kin_path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let Some(id) = stem
            .strip_prefix(&prefix)
            .and_then(|s| TrialId::parse_suffix(task, s))
        else {
            warn!(
                "{}: file name does not match {prefix}<subject><rep>; skipped",
                kin_path.display()
            );
            skipped.push(format!("{}: unrecognized name", kin_path.display()));
            continue;
        };
        let tr_path = transcript_dir.join(format!("{stem}.txt"));
        if !tr_path.exists() {
            warn!("{}: no transcript; skipped", kin_path.display());
            skipped.push(format!("{}: no transcript", kin_path.display()));
            continue;
        }
        let samples = parse_kinematics(&kin_path, columns)?;
        let segments = parse_transcript(&tr_path)?;
        let mut gestures = Vec::with_capacity(segments.len());
        for (i, seg) in segments.iter().enumerate() {
            if seg.end_frame > samples.len() {
                return Err(DataError::Parse {
                    file: tr_path.display().to_string(),
                    line: i + 1,
                    msg: format!(
                        "frame {} beyond {} kinematic samples",
                        seg.end_frame,
                        samples.len()
                    ),
                });
            }
            let key = LabelKey {
                trial: id.clone(),
                gesture_index: i + 1,
            };
            let label = labels.get(&key);
            if let Some(l) = label {
                if l.start_frame != seg.start_frame
                    || l.end_frame != seg.end_frame
                    || l.gesture != seg.gesture
                {
                    return Err(DataError::LabelMismatch {
                        key: key.to_string(),
                        msg: format!(
                            "label says {}-{} {}, transcript says {}-{} {}",
                            l.start_frame,
                            l.end_frame,
                            l.gesture,
                            seg.start_frame,
                            seg.end_frame,
                            seg.gesture
                        ),
                    });
                }
            } else if seg.gesture.supported().is_some() {
                unlabeled.push(key.to_string());
            }
            gestures.push(GestureInstance {
                gesture: seg.gesture,
                start_frame: seg.start_frame,
                end_frame: seg.end_frame,
                error: label.map(|l| l.error),
                error_modes: label.map(|l| l.error_modes.clone()).unwrap_or_default(),
            });
        }
        // labels pointing past the end of a present transcript
        if let Some(key) = labels
            .keys()
            .find(|k| k.trial == id && k.gesture_index > segments.len())
        {
            return Err(DataError::LabelMismatch {
                key: key.to_string(),
                msg: format!("transcript has only {} segments", segments.len()),
            });
        }
        trials.push(TrialRecord {
            id,
            samples,
            gestures,
        });
    }
    if !unlabeled.is_empty() {
        return Err(DataError::Unlabeled(unlabeled));
    }
    Ok((trials, skipped))
}

pub(crate) fn task_dirs(root: &Path, task: TaskClass) -> (PathBuf, PathBuf) {
    let base = root.join(task.dir_name());
    (
        base.join("kinematics").join("AllGestures"),
        base.join("transcriptions"),
    )
}

/// Assemble every task present under a JIGSAWS-style root:
/// `<root>/<Task>/kinematics/AllGestures/*.txt` and `<root>/<Task>/transcriptions/*.txt`.
pub fn assemble_dataset(root: &Path, labels_path: &Path) -> Result<DatasetManifest, DataError> {
    let labels = parse_error_labels(labels_path)?;
    let columns = ColumnMap::default();
    let mut trials = Vec::new();
    let mut skipped = Vec::new();
    for task in TaskClass::ALL {
        let (kin, tr) = task_dirs(root, task);
        if !kin.is_dir() {
            continue;
        }
        let (t, s) = assemble_task(task, &kin, &tr, &labels, &columns)?;
        trials.extend(t);
        skipped.extend(s);
    }
    let mut seen = HashSet::new();
    for t in &trials {
        if !seen.insert(t.id.clone()) {
            return Err(DataError::DuplicateTrial(t.id.to_string()));
        }
    }
    let marker = root.join(SYNTHETIC_MARKER);
    let provenance = if marker.exists() {
        let text = std::fs::read_to_string(&marker).map_err(|e| DataError::io(&marker, e))?;
        serde_json::from_str::<serde_json::Value>(&text)
            .ok()
            .and_then(|v| v.get("seed").and_then(|s| s.as_u64()))
            .map_or(Provenance::Real, |seed| Provenance::Synthetic { seed })
    } else {
        Provenance::Real
    };
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        trials,
        provenance,
        skipped,
    })
}
