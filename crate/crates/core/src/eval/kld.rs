use std::fmt::Write as _;

use log::warn;
use serde::Serialize;

use super::EvalError;
use crate::dataio::{GestureClass, TaskClass, TrialRecord};
use crate::preprocess::{extract_feature_channels, NUM_CHANNELS};

type ClassKey = (TaskClass, GestureClass);

pub const KLD_BINS: usize = 50;
pub const KLD_SMOOTHING: f64 = 1e-10;
/// Classes with fewer raw samples are left out of the matrix.
pub const KLD_MIN_SAMPLES: usize = 30;

/// Smoothed histogram probabilities of `samples` over `[lo, hi]`; the top
/// edge falls in the last bin.
pub fn histogram(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut counts = vec![0usize; bins];
    let width = hi - lo;
    for &v in samples {
        let b = if width > 0.0 {
            (((v - lo) / width) * bins as f64).floor() as usize
        } else {
            0
        };
        counts[b.min(bins - 1)] += 1;
    }
    let n = samples.len().max(1) as f64;
    let norm = 1.0 + bins as f64 * KLD_SMOOTHING;
    counts
        .iter()
        .map(|&c| (c as f64 / n + KLD_SMOOTHING) / norm)
        .collect()
}

/// `D(P‖Q)` in nats.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum()
}

/// `½[D(P‖Q) + D(Q‖P)]`.
pub fn symmetric_kl(p: &[f64], q: &[f64]) -> f64 {
    0.5 * (kl_divergence(p, q) + kl_divergence(q, p))
}

/// Channel-averaged symmetric divergence between two raw sample sets,
/// each given as one value vector per channel.
pub fn channel_divergence(a: &[Vec<f64>], b: &[Vec<f64>], bins: usize) -> f64 {
    let total: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let (lo, hi) = x
                .iter()
                .chain(y)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
                    (l.min(v), h.max(v))
                });
            symmetric_kl(&histogram(x, lo, hi, bins), &histogram(y, lo, hi, bins))
        })
        .sum();
    total / a.len() as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct KldMatrix {
    pub classes: Vec<(TaskClass, GestureClass)>,
    /// Symmetric, row-major over `classes`.
    pub values: Vec<Vec<f64>>,
    /// Classes left out, with their raw sample counts.
    pub excluded: Vec<((TaskClass, GestureClass), usize)>,
    pub bins: usize,
}

/// Divergence between the raw feature distributions of normal instances
/// for every pair of (task, gesture) classes.
pub fn kld_matrix(trials: &[TrialRecord], bins: usize) -> Result<KldMatrix, EvalError> {
    if bins == 0 {
        return Err(EvalError::Config("bins must be positive".into()));
    }
    let mut classes: Vec<(ClassKey, Vec<Vec<f64>>)> = Vec::new();
    for t in trials {
        for (i, inst) in t.gestures.iter().enumerate() {
            let (Some(g), Some(false)) = (inst.gesture.supported(), inst.error) else {
                continue;
            };
            let m = extract_feature_channels(t.instance_samples(i))?;
            let key = (t.id.task, g);
            let pos = match classes.iter().position(|(k, _)| *k == key) {
                Some(p) => p,
                None => {
                    classes.push((key, vec![Vec::new(); NUM_CHANNELS]));
                    classes.len() - 1
                }
            };
            for (c, ch) in classes[pos].1.iter_mut().enumerate() {
                ch.extend_from_slice(m.channel(c));
            }
        }
    }
    classes.sort_by_key(|(k, _)| (k.1, k.0));
    let (kept, dropped): (Vec<_>, Vec<_>) = classes
        .into_iter()
        .partition(|(_, ch)| ch[0].len() >= KLD_MIN_SAMPLES);
    let excluded: Vec<_> = dropped
        .into_iter()
        .map(|(k, ch)| (k, ch[0].len()))
        .collect();
    for ((task, g), n) in &excluded {
        warn!("{task} {g}: only {n} raw normal samples, left out of the divergence matrix");
    }
    let n = kept.len();
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = channel_divergence(&kept[i].1, &kept[j].1, bins);
            values[i][j] = d;
            values[j][i] = d;
        }
        values[i][i] = channel_divergence(&kept[i].1, &kept[i].1, bins);
    }
    Ok(KldMatrix {
        classes: kept.into_iter().map(|(k, _)| k).collect(),
        values,
        excluded,
        bins,
    })
}

impl KldMatrix {
    fn label(c: &(TaskClass, GestureClass)) -> String {
        format!("{}/{}", c.0.short(), c.1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("class");
        for c in &self.classes {
            write!(out, ",{}", Self::label(c)).unwrap();
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.values) {
            out.push_str(&Self::label(c));
            for v in row {
                write!(out, ",{v:.6}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn pretty(&self) -> String {
        let mut out = format!("{:>7}", "");
        for c in &self.classes {
            write!(out, " {:>7}", Self::label(c)).unwrap();
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.values) {
            write!(out, "{:>7}", Self::label(c)).unwrap();
            for v in row {
                write!(out, " {v:>7.3}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}
