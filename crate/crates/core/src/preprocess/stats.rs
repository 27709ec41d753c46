use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, PreprocessError, NUM_CHANNELS};

/// Lower clamp for per-channel standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-channel mean and population standard deviation of a training corpus,
/// tagged with the trials that contributed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub trials: Vec<String>,
}

impl ChannelStats {
    /// Mean 0, std 1: normalization is the identity.
    pub fn identity() -> Self {
        Self {
            mean: vec![0.0; NUM_CHANNELS],
            std: vec![1.0; NUM_CHANNELS],
            trials: Vec::new(),
        }
    }

    pub fn fitted_on(&self, trial: &str) -> bool {
        self.trials.iter().any(|t| t == trial)
    }

    #[inline]
    pub fn normalize_value(&self, channel: usize, v: f64) -> f64 {
        (v - self.mean[channel]) / self.std[channel]
    }
}

/// Two-pass fit over every column of every matrix.
pub fn fit_channel_stats<'a, I>(
    matrices: I,
    trials: Vec<String>,
) -> Result<ChannelStats, PreprocessError>
where
    I: IntoIterator<Item = &'a FeatureMatrix>,
    I::IntoIter: Clone,
{
    let it = matrices.into_iter();
    let n: usize = it.clone().map(FeatureMatrix::len).sum();
    if n == 0 {
        return Err(PreprocessError::Empty("training corpus"));
    }
    let mut mean = vec![0.0; NUM_CHANNELS];
    for m in it.clone() {
        for (c, acc) in mean.iter_mut().enumerate() {
            *acc += m.channel(c).iter().sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);
    let mut var = vec![0.0; NUM_CHANNELS];
    for m in it {
        for (c, acc) in var.iter_mut().enumerate() {
            *acc += m
                .channel(c)
                .iter()
                .map(|v| (v - mean[c]).powi(2))
                .sum::<f64>();
        }
    }
    let std = var
        .iter()
        .map(|v| (v / n as f64).sqrt().max(STD_FLOOR))
        .collect();
    Ok(ChannelStats { mean, std, trials })
}

/// Single-pass (Welford) accumulator producing the same statistics.
#[derive(Debug, Clone)]
pub struct StatsAccumulator {
    n: usize,
    mean: [f64; NUM_CHANNELS],
    m2: [f64; NUM_CHANNELS],
}

impl Default for StatsAccumulator {
    fn default() -> Self {
        Self {
            n: 0,
            mean: [0.0; NUM_CHANNELS],
            m2: [0.0; NUM_CHANNELS],
        }
    }
}

impl StatsAccumulator {
    pub fn push(&mut self, column: &[f64; NUM_CHANNELS]) {
        self.n += 1;
        let n = self.n as f64;
        for (c, &x) in column.iter().enumerate() {
            let d = x - self.mean[c];
            self.mean[c] += d / n;
            self.m2[c] += d * (x - self.mean[c]);
        }
    }

    pub fn finish(&self, trials: Vec<String>) -> Result<ChannelStats, PreprocessError> {
        if self.n == 0 {
            return Err(PreprocessError::Empty("training corpus"));
        }
        Ok(ChannelStats {
            mean: self.mean.to_vec(),
            std: self
                .m2
                .iter()
                .map(|m| (m / self.n as f64).sqrt().max(STD_FLOOR))
                .collect(),
            trials,
        })
    }
}

pub fn normalize(m: &FeatureMatrix, stats: &ChannelStats) -> FeatureMatrix {
    let len = m.len();
    let mut data = m.data().to_vec();
    for c in 0..NUM_CHANNELS {
        for v in &mut data[c * len..(c + 1) * len] {
            *v = stats.normalize_value(c, *v);
        }
    }
    FeatureMatrix::new(len, data).expect("same shape")
}

pub fn denormalize(m: &FeatureMatrix, stats: &ChannelStats) -> FeatureMatrix {
    let len = m.len();
    let mut data = m.data().to_vec();
    for c in 0..NUM_CHANNELS {
        for v in &mut data[c * len..(c + 1) * len] {
            *v = *v * stats.std[c] + stats.mean[c];
        }
    }
    FeatureMatrix::new(len, data).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, len: usize) -> FeatureMatrix {
        let data = (0..NUM_CHANNELS * len)
            .map(|i| rng.random_range(-3.0..3.0) * (1 + i % 5) as f64)
            .collect();
        FeatureMatrix::new(len, data).unwrap()
    }

    #[test]
    fn constant_channel_clamped() {
        let m = FeatureMatrix::new(4, vec![2.5; NUM_CHANNELS * 4]).unwrap();
        let s = fit_channel_stats([&m], vec![]).unwrap();
        assert_eq!(s.mean[0], 2.5);
        assert_eq!(s.std[0], STD_FLOOR);
    }

    #[test]
    fn symmetric_pair() {
        let cols = [[-1.0; NUM_CHANNELS], [1.0; NUM_CHANNELS]];
        let m = FeatureMatrix::from_columns(&cols);
        let s = fit_channel_stats([&m], vec![]).unwrap();
        assert_eq!(s.mean[5], 0.0);
        assert_eq!(s.std[5], 1.0);
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(fit_channel_stats(std::iter::empty::<&FeatureMatrix>(), vec![]).is_err());
    }

    #[test]
    fn two_pass_matches_single_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ms: Vec<FeatureMatrix> = (0..6)
            .map(|i| random_matrix(&mut rng, 10 + i * 7))
            .collect();
        let two = fit_channel_stats(ms.iter(), vec![]).unwrap();
        let mut acc = StatsAccumulator::default();
        for m in &ms {
            for t in 0..m.len() {
                acc.push(&m.column(t));
            }
        }
        let one = acc.finish(vec![]).unwrap();
        for c in 0..NUM_CHANNELS {
            assert!((two.mean[c] - one.mean[c]).abs() < 1e-12);
            assert!((two.std[c] - one.std[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = random_matrix(&mut rng, 40);
        let s = fit_channel_stats([&m], vec![]).unwrap();
        let means = FeatureMatrix::from_columns(&[std::array::from_fn(|c| s.mean[c]); 3]);
        assert!(normalize(&means, &s).data().iter().all(|v| *v == 0.0));

        let z = normalize(&m, &s);
        let refit = fit_channel_stats([&z], vec![]).unwrap();
        for c in 0..NUM_CHANNELS {
            assert!(refit.mean[c].abs() < 1e-12);
            assert!((refit.std[c] - 1.0).abs() < 1e-12);
        }
        let back = denormalize(&z, &s);
        for (a, b) in back.data().iter().zip(m.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
