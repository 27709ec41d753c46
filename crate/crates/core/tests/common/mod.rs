//! Small seeded datasets and tiny model configs shared by the integration tests.
#![allow(dead_code)]

use egd_core::dataio::{synthesize_trials, SyntheticConfig, TrialRecord};
use egd_core::models::{Architecture, ModelConfig};

/// One or more subjects of synthetic trials (10 per subject).
pub fn trials(subjects: &[&str], seed: u64) -> Vec<TrialRecord> {
    let cfg = SyntheticConfig {
        subjects: subjects.iter().map(|s| s.to_string()).collect(),
        ..SyntheticConfig::default()
    };
    synthesize_trials(&cfg, seed).expect("valid synthetic config")
}

/// A network small enough to train in well under a second.
pub fn tiny(arch: Architecture, seed: u64) -> ModelConfig {
    ModelConfig {
        conv_filters: vec![8, 4],
        lstm_hidden: 8,
        lstm_layers: 1,
        fc_layers: vec![8],
        epochs: 2,
        max_pairs_per_epoch: Some(64),
        reference_cap: Some(20),
        seed,
        ..ModelConfig::new(arch)
    }
}
