use rand::Rng;

use super::tensor::gemm;
use super::{GradError, ParamId, ParameterSet, Tensor};

/// Gradients produced by [`conv1d_backward`].
#[derive(Debug, Clone)]
pub struct Conv1dGrads {
    pub input: Tensor,
    pub kernels: Tensor,
    pub bias: Tensor,
}

fn conv_dims(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
) -> Result<(usize, usize, usize, usize, usize), GradError> {
    let (b, c_in, l) = input.as_batched3()?;
    let (c_out, kc, k) = match kernels.shape() {
        [o, c, k] => (*o, *c, *k),
        s => {
            return Err(GradError::Shape(format!(
                "kernels must be [C_out, C_in, k], got {s:?}"
            )))
        }
    };
    if kc != c_in {
        return Err(GradError::Shape(format!(
            "kernel expects {kc} input channels, got {c_in}"
        )));
    }
    if bias.len() != c_out {
        return Err(GradError::Shape(format!(
            "bias has {} entries for {c_out} filters",
            bias.len()
        )));
    }
    if k == 0 || l < k {
        return Err(GradError::Shape(format!(
            "length {l} shorter than kernel {k}"
        )));
    }
    Ok((b, c_in, l, c_out, k))
}

/// Unfold one `[C, L]` sample into `[C*k, L-k+1]` columns.
fn im2col(x: &[f64], c_in: usize, l: usize, k: usize, cols: &mut [f64]) {
    let lo = l - k + 1;
    for c in 0..c_in {
        for j in 0..k {
            let row = &mut cols[(c * k + j) * lo..(c * k + j + 1) * lo];
            row.copy_from_slice(&x[c * l + j..c * l + j + lo]);
        }
    }
}

/// Valid, stride-1 cross-correlation. `input` is `[C_in, L]` or `[B, C_in, L]`.
pub fn conv1d(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor, GradError> {
    let (b, c_in, l, c_out, k) = conv_dims(input, kernels, bias)?;
    let lo = l - k + 1;
    let ck = c_in * k;
    let mut out = vec![0.0; b * c_out * lo];
    let mut cols = vec![0.0; ck * lo];
    for s in 0..b {
        im2col(
            &input.data()[s * c_in * l..(s + 1) * c_in * l],
            c_in,
            l,
            k,
            &mut cols,
        );
        let y = &mut out[s * c_out * lo..(s + 1) * c_out * lo];
        for (o, row) in y.chunks_mut(lo).enumerate() {
            row.fill(bias.data()[o]);
        }
        gemm(
            c_out,
            ck,
            lo,
            1.0,
            kernels.data(),
            ck,
            1,
            &cols,
            lo,
            1,
            1.0,
            y,
            lo,
            1,
        );
    }
    let shape: Vec<usize> = if input.shape().len() == 2 {
        vec![c_out, lo]
    } else {
        vec![b, c_out, lo]
    };
    let t = Tensor::new(&shape, out)?;
    t.check_finite("conv1d")?;
    Ok(t)
}

/// Backward of [`conv1d`] given the upstream gradient of its output.
pub fn conv1d_backward(
    input: &Tensor,
    kernels: &Tensor,
    grad_out: &Tensor,
) -> Result<Conv1dGrads, GradError> {
    let c_out = kernels.shape()[0];
    let bias = Tensor::zeros(&[c_out]);
    let (b, c_in, l, c_out, k) = conv_dims(input, kernels, &bias)?;
    let lo = l - k + 1;
    if grad_out.len() != b * c_out * lo {
        return Err(GradError::Shape("conv1d grad_out size mismatch".into()));
    }
    let ck = c_in * k;
    let mut gk = vec![0.0; c_out * ck];
    let mut gb = vec![0.0; c_out];
    let mut gx = vec![0.0; b * c_in * l];
    let mut cols = vec![0.0; ck * lo];
    let mut dcols = vec![0.0; ck * lo];
    for s in 0..b {
        let x = &input.data()[s * c_in * l..(s + 1) * c_in * l];
        let dy = &grad_out.data()[s * c_out * lo..(s + 1) * c_out * lo];
        im2col(x, c_in, l, k, &mut cols);
        // dK += dy · colsᵀ
        gemm(
            c_out, lo, ck, 1.0, dy, lo, 1, &cols, 1, lo, 1.0, &mut gk, ck, 1,
        );
        for (o, row) in dy.chunks(lo).enumerate() {
            gb[o] += row.iter().sum::<f64>();
        }
        // dcols = Kᵀ · dy
        gemm(
            ck,
            c_out,
            lo,
            1.0,
            kernels.data(),
            1,
            ck,
            dy,
            lo,
            1,
            0.0,
            &mut dcols,
            lo,
            1,
        );
        let dx = &mut gx[s * c_in * l..(s + 1) * c_in * l];
        for c in 0..c_in {
            for j in 0..k {
                let row = &dcols[(c * k + j) * lo..(c * k + j + 1) * lo];
                for (t, g) in row.iter().enumerate() {
                    dx[c * l + j + t] += g;
                }
            }
        }
    }
    Ok(Conv1dGrads {
        input: Tensor::new(input.shape(), gx)?,
        kernels: Tensor::new(kernels.shape(), gk)?,
        bias: Tensor::new(&[c_out], gb)?,
    })
}

/// Convolution layer whose weights live in a [`ParameterSet`].
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    weight: ParamId,
    bias: ParamId,
}

impl Conv1d {
    /// Registers `name.weight` and `name.bias`, uniform in ±1/√(C_in·k).
    pub fn new<R: Rng>(
        params: &mut ParameterSet,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / ((in_channels * kernel) as f64).sqrt();
        let w = (0..out_channels * in_channels * kernel)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let b = (0..out_channels)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let weight = params.add(
            format!("{name}.weight"),
            Tensor::new(&[out_channels, in_channels, kernel], w).expect("shape"),
        );
        let bias = params.add(
            format!("{name}.bias"),
            Tensor::new(&[out_channels], b).expect("shape"),
        );
        Self {
            in_channels,
            out_channels,
            kernel,
            weight,
            bias,
        }
    }

    pub fn forward(&self, params: &ParameterSet, input: &Tensor) -> Result<Tensor, GradError> {
        conv1d(
            input,
            &params.get(self.weight).value,
            &params.get(self.bias).value,
        )
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(
        &self,
        params: &mut ParameterSet,
        input: &Tensor,
        grad_out: &Tensor,
    ) -> Result<Tensor, GradError> {
        let g = conv1d_backward(input, &params.get(self.weight).value, grad_out)?;
        for (a, b) in params
            .grad_mut(self.weight)
            .iter_mut()
            .zip(g.kernels.data())
        {
            *a += b;
        }
        for (a, b) in params.grad_mut(self.bias).iter_mut().zip(g.bias.data()) {
            *a += b;
        }
        Ok(g.input)
    }

    pub fn output_len(&self, len: usize) -> usize {
        len + 1 - self.kernel
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_tap_difference() {
        let x = Tensor::new(&[1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let k = Tensor::new(&[1, 1, 3], vec![1.0, 0.0, -1.0]).unwrap();
        let b = Tensor::zeros(&[1]);
        let y = conv1d(&x, &k, &b).unwrap();
        assert_eq!(y.data(), &[-2.0, -2.0]);
    }

    #[test]
    fn unit_kernel_is_identity() {
        let x = Tensor::new(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.25, 9.0]).unwrap();
        let mut k = Tensor::zeros(&[2, 2, 1]);
        k.data_mut()[0] = 1.0;
        k.data_mut()[3] = 1.0;
        let y = conv1d(&x, &k, &Tensor::zeros(&[2])).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn short_input_rejected() {
        let x = Tensor::new(&[1, 2], vec![1.0, 2.0]).unwrap();
        let k = Tensor::new(&[1, 1, 3], vec![1.0; 3]).unwrap();
        assert!(conv1d(&x, &k, &Tensor::zeros(&[1])).is_err());
    }
}
