use super::Tensor;

pub fn relu(x: &Tensor) -> Tensor {
    map(x, |v| v.max(0.0))
}

/// Gradient given the pre-activation input.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Tensor {
    zip(input, grad_out, |x, g| if x > 0.0 { g } else { 0.0 })
}

pub fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    map(x, sigmoid_scalar)
}

/// Gradient given the sigmoid *output*.
pub fn sigmoid_backward(output: &Tensor, grad_out: &Tensor) -> Tensor {
    zip(output, grad_out, |y, g| g * y * (1.0 - y))
}

pub fn tanh(x: &Tensor) -> Tensor {
    map(x, f64::tanh)
}

fn map(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::new(x.shape(), x.data().iter().map(|v| f(*v)).collect()).expect("same shape")
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    assert_eq!(a.len(), b.len(), "activation gradient size mismatch");
    Tensor::new(
        a.shape(),
        a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| f(*x, *y))
            .collect(),
    )
    .expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_values() {
        let y = relu(&Tensor::from_vec(vec![-1.0, 2.0]));
        assert_eq!(y.data(), &[0.0, 2.0]);
    }

    #[test]
    fn sigmoid_is_half_at_zero_and_stable() {
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        assert!(sigmoid_scalar(-800.0).is_finite());
        assert_eq!(sigmoid_scalar(800.0), 1.0);
        let a = sigmoid_scalar(1.3);
        assert!((a + sigmoid_scalar(-1.3) - 1.0).abs() < 1e-15);
    }
}
