use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use super::{DataError, ErrorMode, GestureTag, TaskClass, TrialId};

pub const LABEL_HEADER: [&str; 7] = [
    "task",
    "trial",
    "gesture_index",
    "start_frame",
    "end_frame",
    "gesture",
    "error",
];
/// Optional trailing column written by the synthetic generator.
pub const MODES_COLUMN: &str = "error_modes";

/// `(trial, 1-based gesture index within the transcript)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelKey {
    pub trial: TrialId,
    pub gesture_index: usize,
}

impl fmt::Display for LabelKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({},{},{})",
            self.trial.task, self.trial, self.gesture_index
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelRecord {
    pub start_frame: usize,
    pub end_frame: usize,
    pub gesture: GestureTag,
    pub error: bool,
    pub error_modes: Vec<ErrorMode>,
}

pub type LabelMap = BTreeMap<LabelKey, LabelRecord>;

pub fn parse_error_labels_str(text: &str, name: &str) -> Result<LabelMap, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let cols: Vec<&str> = headers.iter().map(str::trim).collect();
    if cols.len() < LABEL_HEADER.len() || cols[..LABEL_HEADER.len()] != LABEL_HEADER {
        return Err(DataError::Parse {
            file: name.to_string(),
            line: 1,
            msg: format!("header must start with {}", LABEL_HEADER.join(",")),
        });
    }
    let has_modes = cols.get(LABEL_HEADER.len()) == Some(&MODES_COLUMN);
    let mut map = LabelMap::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let err = |msg: String| DataError::Parse {
            file: name.to_string(),
            line,
            msg,
        };
        if rec.len() < LABEL_HEADER.len() {
            return Err(err(format!(
                "expected {} fields, got {}",
                LABEL_HEADER.len(),
                rec.len()
            )));
        }
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let task: TaskClass = field(0).parse().map_err(err)?;
        let trial = TrialId::parse_label_id(task, field(1))
            .ok_or_else(|| err(format!("bad trial id {:?}", field(1))))?;
        let num = |i: usize| -> Result<usize, DataError> {
            field(i)
                .parse()
                .map_err(|_| err(format!("bad {} {:?}", LABEL_HEADER[i], field(i))))
        };
        let gesture_index = num(2)?;
        let start_frame = num(3)?;
        let end_frame = num(4)?;
        let gesture: GestureTag = field(5).parse().map_err(err)?;
        let error = match field(6) {
            "0" => false,
            "1" => true,
            other => return Err(err(format!("error label must be 0 or 1, got {other:?}"))),
        };
        let error_modes = if has_modes && !field(7).is_empty() {
            field(7)
                .split(';')
                .map(|m| m.parse::<ErrorMode>().map_err(err))
                .collect::<Result<_, _>>()?
        } else {
            Vec::new()
        };
        let key = LabelKey {
            trial,
            gesture_index,
        };
        if map.contains_key(&key) {
            return Err(DataError::DuplicateLabel(key.to_string()));
        }
        map.insert(
            key,
            LabelRecord {
                start_frame,
                end_frame,
                gesture,
                error,
                error_modes,
            },
        );
    }
    Ok(map)
}

pub fn parse_error_labels(path: &Path) -> Result<LabelMap, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_error_labels_str(&text, &path.display().to_string())
}

/// Serialize a label map, including the error-mode column.
pub fn write_error_labels(map: &LabelMap) -> String {
    let mut out = format!("{},{MODES_COLUMN}\n", LABEL_HEADER.join(","));
    for (k, r) in map {
        let modes: Vec<&str> = r.error_modes.iter().map(|m| m.token()).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            k.trial.task.dir_name(),
            k.trial,
            k.gesture_index,
            r.start_frame,
            r.end_frame,
            r.gesture,
            u8::from(r.error),
            modes.join(";")
        ));
    }
    out
}
