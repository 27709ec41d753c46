use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use crate::models::{
    build_model, detect, windows_tensor, Batch, ModelConfig, ModelError, Network, ReferenceBank,
};
use crate::preprocess::FeatureWindow;

/// Leading timed iterations that are discarded.
pub const WARMUP_ITERATIONS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub architecture: String,
    /// Size of the Siamese reference set (0 for single networks).
    pub reference_size: usize,
    pub windows: usize,
    /// Timed predictions kept after warm-up.
    pub samples: usize,
    pub mean_ms: f64,
    pub p95_ms: f64,
}

/// Nearest-rank percentile of an unsorted sample.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Untrained network for timing: batch-norm running statistics come from
/// one training-mode pass over `calibration`; no weight is updated.
pub fn fresh_network(
    config: &ModelConfig,
    calibration: &[&FeatureWindow],
) -> Result<Network, ModelError> {
    let mut net = build_model(config)?;
    let x = windows_tensor(calibration)?;
    let n = calibration.len();
    let targets: Vec<f64> = calibration
        .iter()
        .map(|w| f64::from(u8::from(w.label)))
        .collect();
    let pairs: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    let batch = if config.architecture.is_siamese() {
        Batch::Pairs {
            x: &x,
            pairs: &pairs,
            targets: &targets,
        }
    } else {
        Batch::Windows {
            x: &x,
            targets: &targets,
        }
    };
    net.backprop(batch, config.seed)?;
    net.params.zero_grad();
    Ok(net)
}

/// Wall-clock time per window prediction (including voting for Siamese
/// networks) over `repetitions` passes through `windows`.
pub fn latency_bench(
    network: &Network,
    bank: Option<&ReferenceBank>,
    windows: &[&FeatureWindow],
    repetitions: usize,
) -> Result<LatencyReport, ModelError> {
    let mut times = Vec::with_capacity(windows.len() * repetitions);
    for _ in 0..repetitions {
        for w in windows {
            let t = Instant::now();
            std::hint::black_box(detect(network, w, bank)?);
            times.push(t.elapsed().as_secs_f64() * 1e3);
        }
    }
    let kept = if times.len() > WARMUP_ITERATIONS {
        &times[WARMUP_ITERATIONS..]
    } else {
        &[][..]
    };
    Ok(LatencyReport {
        architecture: network.architecture().name().to_string(),
        reference_size: bank.map_or(0, ReferenceBank::len),
        windows: windows.len(),
        samples: kept.len(),
        mean_ms: if kept.is_empty() { 0.0 } else { mean(kept) },
        p95_ms: if kept.is_empty() {
            0.0
        } else {
            percentile(kept, 0.95)
        },
    })
}

pub fn latency_csv(reports: &[LatencyReport]) -> String {
    let mut out = String::from("architecture,reference_size,windows,samples,mean_ms,p95_ms\n");
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{:.6},{:.6}",
            r.architecture, r.reference_size, r.windows, r.samples, r.mean_ms, r.p95_ms
        )
        .unwrap();
    }
    out
}
