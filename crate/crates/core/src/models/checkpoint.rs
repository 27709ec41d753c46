use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::network::{build_model, Network};
use super::{Architecture, ModelConfig};
use crate::dataio::{GestureClass, TaskClass};
use crate::preprocess::{ChannelStats, WindowConfig};

pub const MAGIC: &[u8; 4] = b"EGD1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint (bad magic)")]
    NotACheckpoint,
    #[error("unsupported checkpoint format version {0}")]
    UnsupportedVersion(u64),
    #[error("truncated checkpoint: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("checkpoint metadata is not valid: {0}")]
    Metadata(String),
    #[error("parameter manifest does not match the architecture: {0}")]
    ManifestMismatch(String),
}

/// Which slice of the data a model was trained for; `None` means pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Scope {
    pub task: Option<TaskClass>,
    pub gesture: Option<GestureClass>,
}

impl Scope {
    pub const ALL: Scope = Scope {
        task: None,
        gesture: None,
    };

    pub fn contains(&self, task: TaskClass, gesture: GestureClass) -> bool {
        self.task.is_none_or(|t| t == task) && self.gesture.is_none_or(|g| g == gesture)
    }

    pub fn label(&self) -> String {
        let t = self.task.map_or("*".to_string(), |t| t.to_string());
        let g = self.gesture.map_or("*".to_string(), |g| g.to_string());
        format!("{g}/{t}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in the payload, in values.
    pub offset: usize,
    pub len: usize,
    pub trainable: bool,
}

/// Descriptive metadata supplied when saving.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointInfo {
    /// Training-setup tag (`gsts`, `gst`, `gts`, `gtt`).
    pub setup: String,
    pub scope: Scope,
    /// Gestures that took part in training; pooled scopes cover only these.
    pub gestures: Vec<GestureClass>,
    pub channel_stats: ChannelStats,
    pub window: WindowConfig,
    pub training_trials: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub tool_version: String,
    pub architecture: Architecture,
    pub seed: u64,
    pub config: ModelConfig,
    #[serde(flatten)]
    pub info: CheckpointInfo,
    pub parameters: Vec<ManifestEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub network: Network,
}

fn manifest(network: &Network) -> Vec<ManifestEntry> {
    let mut offset = 0;
    network
        .params
        .iter()
        .map(|p| {
            let e = ManifestEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                offset,
                len: p.value.len(),
                trainable: p.trainable,
            };
            offset += e.len;
            e
        })
        .collect()
}

pub fn encode_checkpoint(network: &Network, info: &CheckpointInfo) -> Vec<u8> {
    let meta = CheckpointMeta {
        format_version: FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        architecture: network.architecture(),
        seed: network.config.seed,
        config: network.config.clone(),
        info: info.clone(),
        parameters: manifest(network),
    };
    let json = serde_json::to_vec(&meta).expect("metadata serializes");
    let total: usize = meta.parameters.iter().map(|e| e.len).sum();
    let mut out = Vec::with_capacity(8 + json.len() + 4 * total);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in network.params.iter() {
        for &v in p.value.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(CheckpointError::NotACheckpoint);
    }
    if bytes.len() < 8 {
        return Err(CheckpointError::Truncated {
            needed: 8,
            found: bytes.len(),
        });
    }
    let meta_len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let payload_start = 8 + meta_len;
    if bytes.len() < payload_start {
        return Err(CheckpointError::Truncated {
            needed: payload_start,
            found: bytes.len(),
        });
    }
    let raw: serde_json::Value = serde_json::from_slice(&bytes[8..payload_start])
        .map_err(|e| CheckpointError::Metadata(e.to_string()))?;
    match raw.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(FORMAT_VERSION) => {}
        Some(v) => return Err(CheckpointError::UnsupportedVersion(v)),
        None => return Err(CheckpointError::Metadata("missing format_version".into())),
    }
    let meta: CheckpointMeta =
        serde_json::from_value(raw).map_err(|e| CheckpointError::Metadata(e.to_string()))?;
    let mut network =
        build_model(&meta.config).map_err(|e| CheckpointError::Metadata(e.to_string()))?;
    let expected = manifest(&network);
    if expected != meta.parameters {
        let detail = expected
            .iter()
            .zip(&meta.parameters)
            .find(|(a, b)| a != b)
            .map_or_else(
                || {
                    format!(
                        "{} entries expected, {} stored",
                        expected.len(),
                        meta.parameters.len()
                    )
                },
                |(a, b)| {
                    format!(
                        "expected {} {:?}, stored {} {:?}",
                        a.name, a.shape, b.name, b.shape
                    )
                },
            );
        return Err(CheckpointError::ManifestMismatch(detail));
    }
    let total: usize = expected.iter().map(|e| e.len).sum();
    let needed = payload_start + 4 * total;
    if bytes.len() < needed {
        return Err(CheckpointError::Truncated {
            needed,
            found: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(CheckpointError::ManifestMismatch(format!(
            "{} trailing bytes",
            bytes.len() - needed
        )));
    }
    let mut values = bytes[payload_start..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())));
    for p in network.params.iter_mut() {
        for v in p.value.data_mut() {
            *v = values.next().expect("length checked");
        }
    }
    Ok(Checkpoint { meta, network })
}

pub fn save_checkpoint(
    network: &Network,
    info: &CheckpointInfo,
    path: &Path,
) -> Result<(), CheckpointError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CheckpointError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, encode_checkpoint(network, info)).map_err(|e| CheckpointError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|e| CheckpointError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    decode_checkpoint(&bytes)
}
