/// Probabilities are clamped to `[P_CLAMP, 1 - P_CLAMP]` before the log.
pub const P_CLAMP: f64 = 1e-7;

pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(P_CLAMP, 1.0 - P_CLAMP)
}

/// Mean binary cross-entropy over a batch and its gradient with respect to
/// each (unclamped) probability. Clamped entries get zero gradient.
pub fn bce_loss(probs: &[f64], targets: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(probs.len(), targets.len(), "bce: length mismatch");
    let n = probs.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(probs.len());
    for (&p, &y) in probs.iter().zip(targets) {
        let q = clamp_probability(p);
        loss -= y * q.ln() + (1.0 - y) * (1.0 - q).ln();
        let inside = p > P_CLAMP && p < 1.0 - P_CLAMP;
        grad.push(if inside {
            (-y / q + (1.0 - y) / (1.0 - q)) / n
        } else {
            0.0
        });
    }
    (loss / n, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        let (l, _) = bce_loss(&[0.5], &[1.0]);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        let (l, _) = bce_loss(&[1.0 - 1e-7], &[1.0]);
        assert!(l > 0.0 && l < 1.1e-7);
        let (l, _) = bce_loss(&[0.9], &[1.0]);
        assert!((l - 0.105_360_515_657_826_3).abs() < 1e-12);
    }

    #[test]
    fn saturated_input_is_finite() {
        let (l, g) = bce_loss(&[0.0, 1.0], &[1.0, 0.0]);
        assert!(l.is_finite());
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn batch_mean_reduction() {
        let (l2, g2) = bce_loss(&[0.9, 0.9], &[1.0, 1.0]);
        let (l1, g1) = bce_loss(&[0.9], &[1.0]);
        assert!((l2 - l1).abs() < 1e-15);
        assert!((g2[0] * 2.0 - g1[0]).abs() < 1e-15);
    }
}
