use std::collections::HashMap;

use log::debug;
use rand::seq::SliceRandom;
use rand::Rng;

use super::network::{build_model, windows_tensor, Batch, Network};
use super::{ModelConfig, ModelError};
use crate::ndgrad::{AdamState, GradError};
use crate::preprocess::FeatureWindow;
use crate::rng::{derive_seed, seeded};

const PAIR_STREAM: u64 = 0x9a1;
const SHUFFLE_STREAM: u64 = 0x5f1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PairMember {
    Normal(usize),
    Erroneous(usize),
}

/// Two windows and their pair label: `true` (1) when exactly one is erroneous.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SiamesePair {
    pub a: PairMember,
    pub b: PairMember,
    pub label: bool,
}

/// Every normal × erroneous pair (label 1) plus as many normal/normal
/// pairs (label 0), drawn with replacement from the distinct unordered
/// normal pairs.
pub fn make_training_pairs<T>(
    normal: &[T],
    erroneous: &[T],
    seed: u64,
) -> Result<Vec<SiamesePair>, ModelError> {
    if normal.len() < 2 {
        return Err(ModelError::InsufficientWindows {
            class: "normal",
            needed: 2,
            found: normal.len(),
        });
    }
    if erroneous.is_empty() {
        return Err(ModelError::InsufficientWindows {
            class: "erroneous",
            needed: 1,
            found: 0,
        });
    }
    let cross = normal.len() * erroneous.len();
    let mut pairs = Vec::with_capacity(2 * cross);
    for i in 0..normal.len() {
        for j in 0..erroneous.len() {
            pairs.push(SiamesePair {
                a: PairMember::Normal(i),
                b: PairMember::Erroneous(j),
                label: true,
            });
        }
    }
    let mut rng = seeded(seed);
    for _ in 0..cross {
        // uniform ordered distinct pair, then sorted: uniform over unordered pairs
        let i = rng.random_range(0..normal.len());
        let mut j = rng.random_range(0..normal.len() - 1);
        if j >= i {
            j += 1;
        }
        let (i, j) = (i.min(j), i.max(j));
        pairs.push(SiamesePair {
            a: PairMember::Normal(i),
            b: PairMember::Normal(j),
            label: false,
        });
    }
    Ok(pairs)
}

pub enum TrainingData<'a> {
    /// Labeled windows; Siamese networks build their pairs from them.
    Windows(&'a [&'a FeatureWindow]),
    Pairs {
        normal: &'a [&'a FeatureWindow],
        erroneous: &'a [&'a FeatureWindow],
        pairs: &'a [SiamesePair],
    },
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub network: Network,
    /// Mean training loss per epoch.
    pub losses: Vec<f64>,
}

fn diverged(epoch: usize, e: GradError) -> ModelError {
    match e {
        GradError::NonFinite(_) => ModelError::Diverged { epoch },
        other => ModelError::Grad(other),
    }
}

/// Mini-batch Adam on binary cross-entropy for a fixed number of epochs.
/// Parameters are rounded to `f32` at the end.
pub fn train_model(
    config: &ModelConfig,
    data: TrainingData<'_>,
) -> Result<TrainedModel, ModelError> {
    let mut network = build_model(config)?;
    let arch = config.architecture;
    let (normal_buf, erroneous_buf, owned_pairs);
    let (normal, erroneous, pairs): (&[&FeatureWindow], &[&FeatureWindow], &[SiamesePair]) =
        match data {
            TrainingData::Windows(ws) => {
                if ws.is_empty() {
                    return Err(ModelError::EmptyTrainingSet);
                }
                if !arch.is_siamese() {
                    return train_windows(network, config, ws);
                }
                normal_buf = ws.iter().copied().filter(|w| !w.label).collect::<Vec<_>>();
                erroneous_buf = ws.iter().copied().filter(|w| w.label).collect::<Vec<_>>();
                owned_pairs = make_training_pairs(
                    &normal_buf,
                    &erroneous_buf,
                    derive_seed(config.seed, &[PAIR_STREAM]),
                )?;
                (&normal_buf, &erroneous_buf, &owned_pairs)
            }
            TrainingData::Pairs {
                normal,
                erroneous,
                pairs,
            } => {
                if !arch.is_siamese() {
                    return Err(ModelError::Config(format!(
                        "{arch} trains on windows, not pairs"
                    )));
                }
                (normal, erroneous, pairs)
            }
        };
    if pairs.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let mut adam = AdamState::new(&network.params, config.lr);
    let mut rng = seeded(derive_seed(config.seed, &[SHUFFLE_STREAM]));
    let mut losses = Vec::with_capacity(config.epochs);
    let per_epoch = config
        .max_pairs_per_epoch
        .map_or(pairs.len(), |m| m.min(pairs.len()));
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order[..per_epoch].chunks(config.batch_size) {
            let mut slot: HashMap<PairMember, usize> = HashMap::with_capacity(2 * chunk.len());
            let mut members = Vec::with_capacity(2 * chunk.len());
            let mut index = |m: PairMember| {
                *slot.entry(m).or_insert_with(|| {
                    members.push(m);
                    members.len() - 1
                })
            };
            let idx: Vec<(usize, usize)> = chunk
                .iter()
                .map(|&p| (index(pairs[p].a), index(pairs[p].b)))
                .collect();
            let targets: Vec<f64> = chunk
                .iter()
                .map(|&p| f64::from(u8::from(pairs[p].label)))
                .collect();
            let windows = members
                .iter()
                .map(|m| match *m {
                    PairMember::Normal(i) => normal.get(i),
                    PairMember::Erroneous(i) => erroneous.get(i),
                })
                .collect::<Option<Vec<&&FeatureWindow>>>()
                .ok_or_else(|| ModelError::Shape("pair refers to a missing window".into()))?;
            let windows: Vec<&FeatureWindow> = windows.into_iter().copied().collect();
            let x = windows_tensor(&windows)?;
            network.params.zero_grad();
            let loss = network
                .backprop(
                    Batch::Pairs {
                        x: &x,
                        pairs: &idx,
                        targets: &targets,
                    },
                    rng.random(),
                )
                .map_err(|e| diverged(epoch, e))?;
            adam.step(&mut network.params)
                .map_err(|e| diverged(epoch, e))?;
            total += loss * chunk.len() as f64;
        }
        let mean = total / per_epoch as f64;
        if !mean.is_finite() {
            return Err(ModelError::Diverged { epoch });
        }
        debug!("{arch} epoch {}: loss {mean:.5}", epoch + 1);
        losses.push(mean);
    }
    network.params.round_to_f32();
    Ok(TrainedModel { network, losses })
}

fn train_windows(
    mut network: Network,
    config: &ModelConfig,
    windows: &[&FeatureWindow],
) -> Result<TrainedModel, ModelError> {
    let mut adam = AdamState::new(&network.params, config.lr);
    let mut rng = seeded(derive_seed(config.seed, &[SHUFFLE_STREAM]));
    let mut losses = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&FeatureWindow> = chunk.iter().map(|&i| windows[i]).collect();
            let x = windows_tensor(&batch)?;
            let targets: Vec<f64> = batch.iter().map(|w| f64::from(u8::from(w.label))).collect();
            network.params.zero_grad();
            let loss = network
                .backprop(
                    Batch::Windows {
                        x: &x,
                        targets: &targets,
                    },
                    rng.random(),
                )
                .map_err(|e| diverged(epoch, e))?;
            adam.step(&mut network.params)
                .map_err(|e| diverged(epoch, e))?;
            total += loss * chunk.len() as f64;
        }
        let mean = total / windows.len() as f64;
        if !mean.is_finite() {
            return Err(ModelError::Diverged { epoch });
        }
        debug!(
            "{} epoch {}: loss {mean:.5}",
            config.architecture,
            epoch + 1
        );
        losses.push(mean);
    }
    network.params.round_to_f32();
    Ok(TrainedModel { network, losses })
}
