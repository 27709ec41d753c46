//! Finite-difference verification of every differentiable op and of the
//! four full architectures.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::network::{build_model, Batch};
use super::{Architecture, ModelConfig, ModelError};
use crate::ndgrad::{
    batchnorm_backward, batchnorm_train, bce_loss, dropout, dropout_backward, grad_check,
    grad_check_smooth, maxpool1d, maxpool1d_backward, relu, relu_backward, sigmoid,
    sigmoid_backward, Conv1d, Coordinates, Dense, GradError, LstmLayer, Mode, ParamId,
    ParameterSet, Tensor,
};
use crate::rng::{derive_seed, seeded};

/// Central-difference step.
pub const GRADCHECK_STEP: f64 = 1e-3;
/// Largest accepted relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Relative drift of the finite difference above which a coordinate counts
/// as unsettled and is skipped; a quarter of the tolerance so that kept
/// coordinates carry little truncation error.
pub const SETTLE_TOLERANCE: f64 = GRADCHECK_TOLERANCE / 4.0;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub instances: usize,
    /// Coordinates compared over all instances.
    pub checked: usize,
    /// Coordinates skipped because a kink lies within the step.
    pub skipped: usize,
    pub max_rel_error: f64,
    /// Tensor and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub passed: bool,
}

/// A loss `Σ r ⊙ op(θ)` over a parameter set holding the op's input and
/// weights; with `backward` the analytic gradient is written into the set.
type Objective = Box<dyn Fn(&mut ParameterSet, bool) -> Result<f64, GradError>>;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("shape matches")
}

/// Values bounded away from zero so a step of `h` never crosses the ReLU kink.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let mut t = random_tensor(rng, shape, 0.05, 1.0);
    t.data_mut().iter_mut().for_each(|v| {
        if rng.random_bool(0.5) {
            *v = -*v;
        }
    });
    t
}

fn projection(out: &Tensor, r: &Tensor) -> f64 {
    out.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

fn add_grad(ps: &mut ParameterSet, id: ParamId, g: &Tensor) {
    ps.grad_mut(id)
        .iter_mut()
        .zip(g.data())
        .for_each(|(a, b)| *a += b);
}

fn value(ps: &ParameterSet, id: ParamId) -> Tensor {
    ps.get(id).value.clone()
}

fn layer_objective(name: &str, rng: &mut ChaCha8Rng) -> (ParameterSet, Objective) {
    let mut ps = ParameterSet::new();
    match name {
        "dense" => {
            let layer = Dense::new(&mut ps, "dense", 5, 4, rng);
            let x = ps.add("input", random_tensor(rng, &[3, 5], -1.0, 1.0));
            let r = random_tensor(rng, &[3, 4], -1.0, 1.0);
            (
                ps,
                Box::new(move |ps, backward| {
                    let input = value(ps, x);
                    let out = layer.forward(ps, &input)?;
                    if backward {
                        let dx = layer.backward(ps, &input, &r)?;
                        add_grad(ps, x, &dx);
                    }
                    Ok(projection(&out, &r))
                }),
            )
        }
        "conv1d" => {
            let layer = Conv1d::new(&mut ps, "conv", 3, 4, 3, rng);
            let x = ps.add("input", random_tensor(rng, &[2, 3, 7], -1.0, 1.0));
            let r = random_tensor(rng, &[2, 4, 5], -1.0, 1.0);
            (
                ps,
                Box::new(move |ps, backward| {
                    let input = value(ps, x);
                    let out = layer.forward(ps, &input)?;
                    if backward {
                        let dx = layer.backward(ps, &input, &r)?;
                        add_grad(ps, x, &dx);
                    }
                    Ok(projection(&out, &r))
                }),
            )
        }
        "maxpool1d" => {
            // distinct values spaced well beyond 2h inside every pool window
            let n = 2 * 3 * 8;
            let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.05).collect();
            vals.shuffle(rng);
            let x = ps.add("input", Tensor::new(&[2, 3, 8], vals).unwrap());
            let r = random_tensor(rng, &[2, 3, 4], -1.0, 1.0);
            (
                ps,
                Box::new(move |ps, backward| {
                    let input = value(ps, x);
                    let pooled = maxpool1d(&input, 2)?;
                    if backward {
                        let dx = maxpool1d_backward(input.shape(), &pooled.argmax, &r)?;
                        add_grad(ps, x, &dx);
                    }
                    Ok(projection(&pooled.output, &r))
                }),
            )
        }
        "relu" => {
            let x = ps.add("input", away_from_zero(rng, &[4, 6]));
            let r = random_tensor(rng, &[4, 6], -1.0, 1.0);
            (
                ps,
                Box::new(move |ps, backward| {
                    let input = value(ps, x);
                    let out = relu(&input);
                    if backward {
                        add_grad(ps, x, &relu_backward(&input, &r));
                    }
                    Ok(projection(&out, &r))
                }),
            )
        }
        "sigmoid" => {
            let x = ps.add("input", random_tensor(rng, &[4, 6], -4.0, 4.0));
            let r = random_tensor(rng, &[4, 6], -1.0, 1.0);
            (
                ps,
                Box::new(move |ps, backward| {
                    let out = sigmoid(&value(ps, x));
                    if backward {
                        add_grad(ps, x, &sigmoid_backward(&out, &r));
                    }
                    Ok(projection(&out, &r))
                }),
            )
        }
        "dropout" => {
            let x = ps.add("input", random_tensor(rng, &[4, 6], -1.0, 1.0));
            let r = random_tensor(rng, &[4, 6], -1.0, 1.0);
            let mask_seed: u64 = rng.random();
            (
                ps,
                Box::new(move |ps, backward| {
                    let (out, mask) =
                        dropout(&value(ps, x), 0.3, &mut seeded(mask_seed), Mode::Train)?;
                    if backward {
                        add_grad(ps, x, &dropout_backward(mask.as_deref(), &r));
                    }
                    Ok(projection(&out, &r))
                }),
            )
        }
        "batchnorm" => {
            let x = ps.add("input", random_tensor(rng, &[3, 4, 5], -3.0, 3.0));
            let gamma = ps.add("gamma", random_tensor(rng, &[4], 0.5, 1.5));
            let beta = ps.add("beta", random_tensor(rng, &[4], -0.5, 0.5));
            let r = random_tensor(rng, &[3, 4, 5], -1.0, 1.0);
            (
                ps,
                Box::new(move |ps, backward| {
                    let (out, cache) =
                        batchnorm_train(&value(ps, x), ps.value(gamma), ps.value(beta))?;
                    if backward {
                        let (dx, dg, db) = batchnorm_backward(&cache, ps.value(gamma), &r)?;
                        add_grad(ps, x, &dx);
                        ps.grad_mut(gamma)
                            .iter_mut()
                            .zip(&dg)
                            .for_each(|(a, b)| *a += b);
                        ps.grad_mut(beta)
                            .iter_mut()
                            .zip(&db)
                            .for_each(|(a, b)| *a += b);
                    }
                    Ok(projection(&out, &r))
                }),
            )
        }
        "lstm" => {
            let layer = LstmLayer::new(&mut ps, "lstm", 3, 5, rng);
            let x = ps.add("input", random_tensor(rng, &[2, 4, 3], -1.0, 1.0));
            let r = random_tensor(rng, &[2, 4, 5], -1.0, 1.0);
            (
                ps,
                Box::new(move |ps, backward| {
                    let (out, cache) = layer.forward(ps, &value(ps, x))?;
                    if backward {
                        let dx = layer.backward(ps, &cache, &r)?;
                        add_grad(ps, x, &dx);
                    }
                    Ok(projection(&out, &r))
                }),
            )
        }
        "bce" => {
            let p = ps.add("probs", random_tensor(rng, &[6], 0.25, 0.75));
            let targets: Vec<f64> = (0..6)
                .map(|_| f64::from(u8::from(rng.random_bool(0.5))))
                .collect();
            (
                ps,
                Box::new(move |ps, backward| {
                    let (loss, grad) = bce_loss(ps.value(p), &targets);
                    if backward {
                        ps.grad_mut(p)
                            .iter_mut()
                            .zip(&grad)
                            .for_each(|(a, b)| *a += b);
                    }
                    Ok(loss)
                }),
            )
        }
        other => unreachable!("no objective for {other}"),
    }
}

/// Ops covered by [`check_layers`].
pub const LAYER_CHECKS: [&str; 9] = [
    "dense",
    "conv1d",
    "maxpool1d",
    "relu",
    "sigmoid",
    "dropout",
    "batchnorm",
    "lstm",
    "bce",
];

fn merge(name: &str, instances: usize, reports: &[crate::ndgrad::GradCheckReport]) -> CheckResult {
    let mut out = CheckResult {
        name: name.into(),
        instances,
        checked: 0,
        skipped: 0,
        max_rel_error: 0.0,
        worst: None,
        passed: true,
    };
    for r in reports {
        out.checked += r.checked;
        out.skipped += r.skipped;
        if r.max_rel_error >= out.max_rel_error || out.worst.is_none() {
            out.max_rel_error = r.max_rel_error;
            out.worst = r.worst.clone();
        }
        out.passed &= r.passed(GRADCHECK_TOLERANCE);
    }
    out.passed &= !reports.is_empty();
    out
}

/// Every op over `instances` random inputs, all coordinates.
pub fn check_layers(seed: u64, instances: usize) -> Result<Vec<CheckResult>, ModelError> {
    LAYER_CHECKS
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let reports = (0..instances)
                .map(|i| {
                    let mut rng = seeded(derive_seed(seed, &[k as u64, i as u64]));
                    let (mut ps, f) = layer_objective(name, &mut rng);
                    ps.zero_grad();
                    f(&mut ps, true)?;
                    grad_check(&ps, |w| f(w, false), GRADCHECK_STEP, Coordinates::All)
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(merge(name, instances, &reports))
        })
        .collect()
}

/// Default-sized architecture with freshly seeded weights on a random
/// batch, dropout masks fixed by the seed.
fn check_network(
    arch: Architecture,
    seed: u64,
    per_tensor: usize,
) -> Result<crate::ndgrad::GradCheckReport, ModelError> {
    let mut rng = seeded(seed);
    let config = ModelConfig {
        seed,
        ..ModelConfig::new(arch)
    };
    let mut net = build_model(&config)?;
    let (c, l) = (config.channels, config.window_length);
    let windows = 4;
    let x = random_tensor(&mut rng, &[windows, c, l], -2.0, 2.0);
    let dropout_seed: u64 = rng.random();
    let targets: Vec<f64>;
    let pairs: Vec<(usize, usize)>;
    let batch = if arch.is_siamese() {
        pairs = vec![(0, 1), (0, 2), (1, 3), (2, 3)];
        targets = vec![1.0, 0.0, 1.0, 0.0];
        Batch::Pairs {
            x: &x,
            pairs: &pairs,
            targets: &targets,
        }
    } else {
        targets = vec![1.0, 0.0, 0.0, 1.0];
        Batch::Windows {
            x: &x,
            targets: &targets,
        }
    };
    net.params.zero_grad();
    net.backprop(batch, dropout_seed)?;
    let coords = Coordinates::Sample {
        per_tensor,
        seed: derive_seed(seed, &[0xc0]),
    };
    let loss = |w: &mut ParameterSet| net.batch_loss(w, batch, dropout_seed);
    Ok(grad_check_smooth(
        &net.params,
        loss,
        GRADCHECK_STEP,
        coords,
        SETTLE_TOLERANCE,
    )?)
}

/// Each full architecture (Siamese ones on pairs) over `instances` seeded
/// networks and batches, `per_tensor` sampled coordinates per tensor.
/// Coordinates whose step straddles a ReLU, pooling or |x| kink are
/// skipped and counted.
pub fn check_architectures(
    seed: u64,
    instances: usize,
    per_tensor: usize,
) -> Result<Vec<CheckResult>, ModelError> {
    Architecture::ALL
        .iter()
        .map(|&arch| {
            let reports = (0..instances)
                .map(|i| {
                    check_network(
                        arch,
                        derive_seed(seed, &[0xa7, arch as u64, i as u64]),
                        per_tensor,
                    )
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(merge(arch.name(), instances, &reports))
        })
        .collect()
}
