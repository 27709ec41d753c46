use rand::Rng;

use super::{GradError, Mode, Tensor};

/// Inverted dropout. Returns the output and the per-element scale applied
/// (0 for dropped units, `1/(1-p)` for kept ones), which is also the
/// backward multiplier.
pub fn dropout<R: Rng + ?Sized>(
    input: &Tensor,
    p: f64,
    rng: &mut R,
    mode: Mode,
) -> Result<(Tensor, Option<Vec<f64>>), GradError> {
    if !(0.0..1.0).contains(&p) {
        return Err(GradError::InvalidDropout(p));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok((input.clone(), None));
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..input.len())
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    let out = input.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
    Ok((Tensor::new(input.shape(), out)?, Some(mask)))
}

pub fn dropout_backward(mask: Option<&[f64]>, grad_out: &Tensor) -> Tensor {
    match mask {
        None => grad_out.clone(),
        Some(m) => {
            let g = grad_out.data().iter().zip(m).map(|(g, m)| g * m).collect();
            Tensor::new(grad_out.shape(), g).expect("mask matches gradient")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_rate_and_eval_are_identity() {
        let x = Tensor::from_vec(vec![1.0, -2.0, 3.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(dropout(&x, 0.0, &mut rng, Mode::Train).unwrap().0, x);
        assert_eq!(dropout(&x, 0.7, &mut rng, Mode::Eval).unwrap().0, x);
    }

    #[test]
    fn rate_one_rejected() {
        let x = Tensor::from_vec(vec![1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(dropout(&x, 1.0, &mut rng, Mode::Train).is_err());
    }

    #[test]
    fn expectation_preserved() {
        let x = Tensor::from_vec(vec![2.5; 100_000]);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (y, _) = dropout(&x, 0.2, &mut rng, Mode::Train).unwrap();
        let mean = y.data().iter().sum::<f64>() / y.len() as f64;
        assert!((mean - 2.5).abs() / 2.5 < 0.01, "mean {mean}");
    }

    #[test]
    fn seeded_masks_repeat() {
        let x = Tensor::from_vec(vec![1.0; 64]);
        let a = dropout(&x, 0.5, &mut ChaCha8Rng::seed_from_u64(3), Mode::Train)
            .unwrap()
            .0;
        let b = dropout(&x, 0.5, &mut ChaCha8Rng::seed_from_u64(3), Mode::Train)
            .unwrap()
            .0;
        assert_eq!(a, b);
    }
}
