use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::preprocess::NUM_CHANNELS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    Cnn,
    Lstm,
    SiameseCnn,
    SiameseLstm,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::Cnn,
        Architecture::Lstm,
        Architecture::SiameseCnn,
        Architecture::SiameseLstm,
    ];

    pub fn is_siamese(self) -> bool {
        matches!(self, Architecture::SiameseCnn | Architecture::SiameseLstm)
    }

    pub fn is_recurrent(self) -> bool {
        matches!(self, Architecture::Lstm | Architecture::SiameseLstm)
    }

    /// The single network sharing this architecture's encoder.
    pub fn single(self) -> Architecture {
        if self.is_recurrent() {
            Architecture::Lstm
        } else {
            Architecture::Cnn
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Cnn => "cnn",
            Architecture::Lstm => "lstm",
            Architecture::SiameseCnn => "siamese-cnn",
            Architecture::SiameseLstm => "siamese-lstm",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.name() == s.to_ascii_lowercase().replace('_', "-"))
            .ok_or_else(|| {
                format!("unknown model {s:?} (expected cnn, lstm, siamese-cnn or siamese-lstm)")
            })
    }
}

/// Architecture plus training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub channels: usize,
    pub window_length: usize,
    pub conv_filters: Vec<usize>,
    pub kernel_size: usize,
    pub pool_size: usize,
    pub conv_dropout: f64,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    /// Hidden widths of the fully connected head (a final 1-unit layer follows).
    pub fc_layers: Vec<usize>,
    /// Dropout after each hidden head layer.
    pub fc_dropout: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Maximum reference windows kept for voting; `None` keeps all.
    pub reference_cap: Option<usize>,
    /// Pairs drawn (without replacement) per Siamese epoch; `None` uses all.
    pub max_pairs_per_epoch: Option<usize>,
}

impl ModelConfig {
    pub fn new(architecture: Architecture) -> Self {
        Self {
            architecture,
            channels: NUM_CHANNELS,
            window_length: 30,
            conv_filters: vec![64, 32],
            kernel_size: 3,
            pool_size: 2,
            conv_dropout: 0.2,
            lstm_hidden: 64,
            lstm_layers: 3,
            fc_layers: vec![128, 64, 32],
            fc_dropout: if architecture == Architecture::Lstm {
                0.2
            } else {
                0.0
            },
            lr: 1e-3,
            batch_size: 32,
            epochs: 100,
            seed: 0,
            reference_cap: None,
            max_pairs_per_epoch: None,
        }
    }

    /// Length of the sequence after every conv block.
    fn conv_lengths(&self) -> Result<Vec<usize>, ModelError> {
        let mut len = self.window_length;
        let mut out = Vec::new();
        for (i, _) in self.conv_filters.iter().enumerate() {
            if len < self.kernel_size {
                return Err(ModelError::Config(format!(
                    "conv block {} gets length {len} < kernel",
                    i + 1
                )));
            }
            len = (len + 1 - self.kernel_size) / self.pool_size;
            if len == 0 {
                return Err(ModelError::Config(format!(
                    "conv block {} pools to length 0",
                    i + 1
                )));
            }
            out.push(len);
        }
        Ok(out)
    }

    /// Width of the flattened encoder output.
    pub fn embedding_width(&self) -> Result<usize, ModelError> {
        if self.architecture.is_recurrent() {
            Ok(self.window_length * self.lstm_hidden)
        } else {
            let last = *self
                .conv_lengths()?
                .last()
                .ok_or_else(|| ModelError::Config("no conv blocks".into()))?;
            Ok(last * self.conv_filters.last().copied().unwrap_or(0))
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.channels == 0 || self.window_length == 0 {
            return bad("channels and window length must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        for (name, p) in [
            ("conv_dropout", self.conv_dropout),
            ("fc_dropout", self.fc_dropout),
        ] {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("{name} {p} outside [0, 1)"));
            }
        }
        if self.fc_layers.contains(&0) {
            return bad("fully connected widths must be positive".into());
        }
        if self.reference_cap == Some(0) || self.max_pairs_per_epoch == Some(0) {
            return bad("caps must be positive when set".into());
        }
        if self.architecture.is_recurrent() {
            if self.lstm_hidden == 0 || self.lstm_layers == 0 {
                return bad("LSTM needs positive hidden size and layer count".into());
            }
        } else {
            if self.conv_filters.is_empty() || self.conv_filters.contains(&0) {
                return bad("CNN needs at least one conv block with positive filters".into());
            }
            if self.kernel_size == 0 || self.pool_size == 0 {
                return bad("kernel and pool sizes must be positive".into());
            }
            self.conv_lengths()?;
        }
        Ok(())
    }

    /// Apply a JSON object of field overrides.
    pub fn with_overrides(&self, overrides: &serde_json::Value) -> Result<Self, ModelError> {
        let mut base = serde_json::to_value(self).expect("config serializes");
        let (Some(obj), Some(over)) = (base.as_object_mut(), overrides.as_object()) else {
            return Err(ModelError::Config("overrides must be a JSON object".into()));
        };
        for (k, v) in over {
            if !obj.contains_key(k) {
                return Err(ModelError::Config(format!("unknown config field {k:?}")));
            }
            obj.insert(k.clone(), v.clone());
        }
        let cfg: ModelConfig = serde_json::from_value(base)
            .map_err(|e| ModelError::Config(format!("bad override: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cnn_shape_algebra() {
        // 30 → conv 28 → pool 14 → conv 12 → pool 6; 32 filters × 6 = 192
        let cfg = ModelConfig::new(Architecture::Cnn);
        assert_eq!(cfg.conv_lengths().unwrap(), vec![14, 6]);
        assert_eq!(cfg.embedding_width().unwrap(), 192);
        assert_eq!(
            ModelConfig::new(Architecture::SiameseLstm)
                .embedding_width()
                .unwrap(),
            1920
        );
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = ModelConfig::new(Architecture::Cnn);
        cfg.window_length = 4;
        assert!(cfg.validate().is_err());
        let cfg = ModelConfig {
            lr: 0.0,
            ..ModelConfig::new(Architecture::Lstm)
        };
        assert!(cfg.validate().is_err());
        let cfg = ModelConfig {
            conv_dropout: 1.0,
            ..ModelConfig::new(Architecture::SiameseCnn)
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn overrides() {
        let cfg = ModelConfig::new(Architecture::Cnn);
        let o = cfg
            .with_overrides(&serde_json::json!({"epochs": 3, "lr": 0.01}))
            .unwrap();
        assert_eq!((o.epochs, o.lr), (3, 0.01));
        assert!(cfg.with_overrides(&serde_json::json!({"nope": 1})).is_err());
        assert!(cfg
            .with_overrides(&serde_json::json!({"batch_size": 0}))
            .is_err());
    }

    #[test]
    fn names_round_trip() {
        for a in Architecture::ALL {
            assert_eq!(a.name().parse::<Architecture>().unwrap(), a);
        }
    }
}
