use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataio::{GestureClass, TaskClass};
use crate::models::Scope;

/// How windows are grouped into independently trained models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrainingSetup {
    /// One model per (gesture, task).
    Gsts,
    /// One model per gesture, tasks pooled.
    GstStar,
    /// One model per task, gestures pooled.
    GstarTs,
    /// A single pooled model.
    GstarTstar,
}

impl TrainingSetup {
    pub const ALL: [TrainingSetup; 4] = [
        TrainingSetup::Gsts,
        TrainingSetup::GstStar,
        TrainingSetup::GstarTs,
        TrainingSetup::GstarTstar,
    ];

    /// Shell-friendly name: `gsts`, `gst`, `gts`, `gtt`.
    pub fn name(self) -> &'static str {
        match self {
            TrainingSetup::Gsts => "gsts",
            TrainingSetup::GstStar => "gst",
            TrainingSetup::GstarTs => "gts",
            TrainingSetup::GstarTstar => "gtt",
        }
    }

    /// Conventional label: `GSTS`, `GST*`, `G*TS`, `G*T*`.
    pub fn label(self) -> &'static str {
        match self {
            TrainingSetup::Gsts => "GSTS",
            TrainingSetup::GstStar => "GST*",
            TrainingSetup::GstarTs => "G*TS",
            TrainingSetup::GstarTstar => "G*T*",
        }
    }

    pub fn binds_task(self) -> bool {
        matches!(self, TrainingSetup::Gsts | TrainingSetup::GstarTs)
    }

    pub fn binds_gesture(self) -> bool {
        matches!(self, TrainingSetup::Gsts | TrainingSetup::GstStar)
    }

    /// The scope a window of this task and gesture belongs to.
    pub fn scope_of(self, task: TaskClass, gesture: GestureClass) -> Scope {
        Scope {
            task: self.binds_task().then_some(task),
            gesture: self.binds_gesture().then_some(gesture),
        }
    }

    /// All scopes over the given tasks and gestures, gesture-major.
    pub fn scopes(self, tasks: &[TaskClass], gestures: &[GestureClass]) -> Vec<Scope> {
        let mut out = Vec::new();
        for &g in gestures {
            for &t in tasks {
                let s = self.scope_of(t, g);
                if !out.contains(&s) {
                    out.push(s);
                }
            }
        }
        out
    }

    /// Check a requested scope against what this setup binds.
    pub fn validate_scope(self, scope: &Scope) -> Result<(), String> {
        match (self.binds_task(), scope.task.is_some()) {
            (true, false) => return Err(format!("setup {} needs a task", self.name())),
            (false, true) => {
                return Err(format!("setup {} pools tasks; drop the task", self.name()))
            }
            _ => {}
        }
        match (self.binds_gesture(), scope.gesture.is_some()) {
            (true, false) => Err(format!("setup {} needs a gesture", self.name())),
            (false, true) => Err(format!(
                "setup {} pools gestures; drop the gesture",
                self.name()
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for TrainingSetup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrainingSetup {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gsts" => Ok(TrainingSetup::Gsts),
            "gst" | "gst*" => Ok(TrainingSetup::GstStar),
            "gts" | "g*ts" => Ok(TrainingSetup::GstarTs),
            "gtt" | "g*t*" => Ok(TrainingSetup::GstarTstar),
            _ => Err(format!(
                "unknown setup {s:?} (expected gsts, gst, gts or gtt)"
            )),
        }
    }
}
