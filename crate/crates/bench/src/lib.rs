//! Fixtures shared by the inference benchmarks.

use egd_core::dataio::{synthesize_trials, GestureClass, SyntheticConfig, TrialRecord};
use egd_core::eval::{fit_scope_stats, fresh_network, scope_instances, scope_windows};
use egd_core::models::{
    select_references, Architecture, ModelConfig, ModelError, Network, ReferenceBank, Scope,
};
use egd_core::preprocess::{FeatureWindow, WindowConfig};

/// Normalized windows of a one-subject synthetic dataset.
pub fn synthetic_windows(seed: u64) -> Vec<FeatureWindow> {
    let cfg = SyntheticConfig {
        subjects: vec!["B".into()],
        ..SyntheticConfig::default()
    };
    let trials = synthesize_trials(&cfg, seed).expect("default config is valid");
    let refs: Vec<&TrialRecord> = trials.iter().collect();
    let window = WindowConfig::default();
    let inst = scope_instances(&refs, &Scope::ALL, &GestureClass::MODELED);
    let stats = fit_scope_stats(&inst, &window).expect("instances present");
    scope_windows(&inst, &stats, &window)
        .expect("windowing succeeds")
        .into_iter()
        .flatten()
        .collect()
}

/// A default-size network of `arch` and, for Siamese ones, a bank of
/// `references` normal windows (the same windows for every architecture).
pub fn fixture(
    arch: Architecture,
    windows: &[FeatureWindow],
    references: usize,
) -> Result<(Network, Option<ReferenceBank>), ModelError> {
    let calibration: Vec<&FeatureWindow> = windows.iter().take(32).collect();
    let net = fresh_network(&ModelConfig::new(arch), &calibration)?;
    let bank = if arch.is_siamese() {
        let normal: Vec<&FeatureWindow> = windows.iter().filter(|w| !w.label).collect();
        let refs = select_references(&normal, Some(references), 1);
        Some(ReferenceBank::build(&net, &refs)?)
    } else {
        None
    };
    Ok((net, bank))
}
