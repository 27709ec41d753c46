use super::euler::sample_euler;
use super::{PreprocessError, NUM_CHANNELS};
use crate::dataio::RawKinematicSample;

/// Channel-major `26 × len` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    len: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(len: usize, data: Vec<f64>) -> Result<Self, PreprocessError> {
        if data.len() != NUM_CHANNELS * len {
            return Err(PreprocessError::Shape(format!(
                "{} values for {NUM_CHANNELS}x{len}",
                data.len()
            )));
        }
        Ok(Self { len, data })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            data: vec![0.0; NUM_CHANNELS * len],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn get(&self, c: usize, t: usize) -> f64 {
        self.data[c * self.len + t]
    }

    pub fn column(&self, t: usize) -> [f64; NUM_CHANNELS] {
        std::array::from_fn(|c| self.get(c, t))
    }

    /// Build from per-sample columns.
    pub fn from_columns(columns: &[[f64; NUM_CHANNELS]]) -> Self {
        let len = columns.len();
        let mut data = vec![0.0; NUM_CHANNELS * len];
        for (t, col) in columns.iter().enumerate() {
            for (c, v) in col.iter().enumerate() {
                data[c * len + t] = *v;
            }
        }
        Self { len, data }
    }
}

/// The 26 feature values of one raw sample: per arm (left first) position,
/// Euler yaw/pitch/roll, linear velocity, rotational velocity, gripper.
pub fn sample_features(s: &RawKinematicSample) -> Result<[f64; NUM_CHANNELS], PreprocessError> {
    let euler = sample_euler(s)?;
    let mut out = [0.0; NUM_CHANNELS];
    for (a, arm) in s.arms.iter().enumerate() {
        let o = a * 13;
        out[o..o + 3].copy_from_slice(&arm.position);
        out[o + 3] = euler[a].yaw;
        out[o + 4] = euler[a].pitch;
        out[o + 5] = euler[a].roll;
        out[o + 6..o + 9].copy_from_slice(&arm.linear_velocity);
        out[o + 9..o + 12].copy_from_slice(&arm.rotational_velocity);
        out[o + 12] = arm.gripper_angle;
    }
    Ok(out)
}

pub fn extract_feature_channels(
    samples: &[RawKinematicSample],
) -> Result<FeatureMatrix, PreprocessError> {
    if samples.is_empty() {
        return Err(PreprocessError::Empty("sample sequence"));
    }
    let cols = samples
        .iter()
        .map(sample_features)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FeatureMatrix::from_columns(&cols))
}

/// Keep every `factor`-th column starting at index 0.
pub fn downsample(m: &FeatureMatrix, factor: usize) -> Result<FeatureMatrix, PreprocessError> {
    if factor == 0 {
        return Err(PreprocessError::InvalidFactor);
    }
    let len = m.len.div_ceil(factor);
    let mut data = Vec::with_capacity(NUM_CHANNELS * len);
    for c in 0..NUM_CHANNELS {
        data.extend(m.channel(c).iter().step_by(factor));
    }
    Ok(FeatureMatrix { len, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{ArmSample, RawKinematicSample};

    fn identity_sample() -> RawKinematicSample {
        let arm = ArmSample {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            ..Default::default()
        };
        RawKinematicSample { arms: [arm, arm] }
    }

    #[test]
    fn zero_samples_give_zero_matrix() {
        let m = extract_feature_channels(&vec![identity_sample(); 7]).unwrap();
        assert_eq!(m.len(), 7);
        assert!(m.data().iter().all(|v| *v == 0.0));
        assert_eq!(
            extract_feature_channels(&[identity_sample()])
                .unwrap()
                .len(),
            1
        );
        assert!(extract_feature_channels(&[]).is_err());
    }

    #[test]
    fn position_x_maps_to_channels_1_and_14() {
        let samples: Vec<_> = (0..20)
            .map(|t| {
                let mut s = identity_sample();
                let v = (t as f64 * 0.3).sin() + 0.1;
                s.arms[0].position[0] = v;
                s.arms[1].position[0] = v;
                s
            })
            .collect();
        let m = extract_feature_channels(&samples).unwrap();
        // enumerate every channel; 1-based channels 1 and 14 are indices 0 and 13
        for c in 0..NUM_CHANNELS {
            let nonzero = m.channel(c).iter().any(|v| *v != 0.0);
            assert_eq!(nonzero, c == 0 || c == 13, "channel {c}");
        }
    }

    #[test]
    fn downsample_rules() {
        let cols: Vec<[f64; NUM_CHANNELS]> = (0..5).map(|t| [t as f64; NUM_CHANNELS]).collect();
        let m = FeatureMatrix::from_columns(&cols);
        let d = downsample(&m, 2).unwrap();
        assert_eq!(d.channel(3), &[0.0, 2.0, 4.0]);
        assert_eq!(downsample(&m, 1).unwrap(), m);
        assert!(downsample(&m, 0).is_err());
        let m30 = FeatureMatrix::zeros(30);
        assert_eq!(downsample(&m30, 2).unwrap().len(), 15);
    }
}
