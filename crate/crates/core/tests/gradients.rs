//! Finite-difference checks through the public op and model APIs.

use egd_core::models::{check_architectures, check_layers, GRADCHECK_STEP, GRADCHECK_TOLERANCE};
use egd_core::ndgrad::{dense, dense_backward, grad_check, Coordinates, ParameterSet, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// `½‖xWᵀ + b‖²` with its gradient, optionally corrupted.
fn dense_problem(corrupt: impl Fn(&mut [f64], &mut [f64])) -> (ParameterSet, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random(&mut rng, &[4, 5]);
    let mut ps = ParameterSet::new();
    let w = ps.add("w", random(&mut rng, &[3, 5]));
    let b = ps.add("b", random(&mut rng, &[3]));
    let y = dense(&x, &ps.get(w).value, &ps.get(b).value).unwrap();
    let (_, mut dw, mut db) = dense_backward(&x, &ps.get(w).value, &y).unwrap();
    corrupt(dw.data_mut(), db.data_mut());
    ps.grad_mut(w).copy_from_slice(dw.data());
    ps.grad_mut(b).copy_from_slice(db.data());
    (ps, x)
}

fn check(ps: &ParameterSet, x: &Tensor) -> egd_core::ndgrad::GradCheckReport {
    let loss = |p: &mut ParameterSet| {
        let mut it = p.iter();
        let (w, b) = (&it.next().unwrap().value, &it.next().unwrap().value);
        let y = dense(x, w, b)?;
        Ok(0.5 * y.data().iter().map(|v| v * v).sum::<f64>())
    };
    grad_check(ps, loss, GRADCHECK_STEP, Coordinates::All).unwrap()
}

#[test]
fn correct_dense_gradient_passes() {
    let (ps, x) = dense_problem(|_, _| {});
    let r = check(&ps, &x);
    assert_eq!(r.checked, 18);
    assert!(r.passed(GRADCHECK_TOLERANCE), "{r:?}");
}

#[test]
fn corrupted_gradients_are_caught() {
    let bugs: [(&str, fn(&mut [f64], &mut [f64])); 3] = [
        ("scaled bias", |_, db| {
            db.iter_mut().for_each(|v| *v *= 1.01)
        }),
        ("one weight off", |dw, _| dw[7] += 1e-2),
        ("swapped rows", |dw, _| {
            for j in 0..5 {
                dw.swap(j, 5 + j)
            }
        }),
    ];
    for (name, bug) in bugs {
        let (ps, x) = dense_problem(bug);
        let r = check(&ps, &x);
        assert!(!r.passed(GRADCHECK_TOLERANCE), "{name}: {r:?}");
    }
}

#[test]
fn every_layer_passes_on_fresh_instances() {
    for r in check_layers(99, 4).unwrap() {
        assert!(r.passed, "{r:?}");
        assert!(r.checked > 0);
    }
}

#[test]
fn every_architecture_passes_on_sampled_coordinates() {
    let results = check_architectures(99, 1, 2).unwrap();
    assert_eq!(results.len(), 4);
    for r in results {
        assert!(r.passed, "{r:?}");
        assert!(r.checked > r.skipped, "{r:?}");
    }
}
