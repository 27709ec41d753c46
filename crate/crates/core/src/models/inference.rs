use std::time::Instant;

use rand::seq::index::sample;

use super::network::{windows_tensor, Network};
use super::ModelError;
use crate::ndgrad::Tensor;
use crate::preprocess::{FeatureWindow, WindowSource};
use crate::rng::seeded;

/// Probabilities and vote fractions at or above this are erroneous.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// `y_k` for single networks, fraction of "different" votes for Siamese ones.
    pub score: f64,
    pub erroneous: bool,
    /// Wall-clock time of this prediction.
    pub elapsed_ms: f64,
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Majority over pair indicators; ties count as erroneous.
pub fn majority_vote(indicators: &[bool]) -> Result<(f64, bool), ModelError> {
    if indicators.is_empty() {
        return Err(ModelError::EmptyReferenceSet);
    }
    let ones = indicators.iter().filter(|&&b| b).count();
    Ok((
        ones as f64 / indicators.len() as f64,
        2 * ones >= indicators.len(),
    ))
}

pub fn predict_probability(
    network: &Network,
    window: &FeatureWindow,
) -> Result<DetectionResult, ModelError> {
    let t = Instant::now();
    let p = network.predict_batch(&windows_tensor(&[window])?)?[0];
    Ok(DetectionResult {
        score: p,
        erroneous: p >= DECISION_THRESHOLD,
        elapsed_ms: elapsed_ms(t),
    })
}

/// Up to `cap` windows chosen by seeded sampling. Candidates are ranked by
/// source first, so the choice does not depend on the order they arrive in.
pub fn select_references<'a>(
    windows: &[&'a FeatureWindow],
    cap: Option<usize>,
    seed: u64,
) -> Vec<&'a FeatureWindow> {
    match cap {
        Some(c) if c < windows.len() => {
            let mut ranked = windows.to_vec();
            ranked.sort_by(|a, b| a.source.cmp(&b.source));
            let mut idx = sample(&mut seeded(seed), ranked.len(), c).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| ranked[i]).collect()
        }
        _ => windows.to_vec(),
    }
}

/// Cached encoder outputs of the normal reference windows.
#[derive(Debug, Clone)]
pub struct ReferenceBank {
    embeddings: Tensor,
    pub sources: Vec<WindowSource>,
}

impl ReferenceBank {
    pub fn build(network: &Network, references: &[&FeatureWindow]) -> Result<Self, ModelError> {
        if references.is_empty() {
            return Err(ModelError::EmptyReferenceSet);
        }
        let mut rows = Vec::with_capacity(references.len() * network.embedding_width());
        for w in references {
            rows.extend_from_slice(network.embed(&windows_tensor(&[w])?)?.data());
        }
        Ok(Self {
            embeddings: Tensor::new(&[references.len(), network.embedding_width()], rows)?,
            sources: references.iter().map(|w| w.source.clone()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn embeddings(&self) -> &Tensor {
        &self.embeddings
    }
}

/// Pair the window with every reference, threshold each pair output and
/// fuse by majority vote.
pub fn siamese_vote(
    network: &Network,
    window: &FeatureWindow,
    bank: &ReferenceBank,
) -> Result<DetectionResult, ModelError> {
    if bank.is_empty() {
        return Err(ModelError::EmptyReferenceSet);
    }
    let t = Instant::now();
    let query = network.embed(&windows_tensor(&[window])?)?;
    let probs = network.compare_embeddings(query.data(), &bank.embeddings)?;
    let indicators: Vec<bool> = probs.iter().map(|&p| p >= DECISION_THRESHOLD).collect();
    let (score, erroneous) = majority_vote(&indicators)?;
    Ok(DetectionResult {
        score,
        erroneous,
        elapsed_ms: elapsed_ms(t),
    })
}

/// Either kind of network behind one call.
pub fn detect(
    network: &Network,
    window: &FeatureWindow,
    bank: Option<&ReferenceBank>,
) -> Result<DetectionResult, ModelError> {
    if network.architecture().is_siamese() {
        siamese_vote(network, window, bank.ok_or(ModelError::EmptyReferenceSet)?)
    } else {
        predict_probability(network, window)
    }
}
