use super::{GradError, Mode, ParamId, ParameterSet, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Saved activations for the batch-norm backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    shape: Vec<usize>,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    /// Batch mean and biased variance per channel.
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

fn bn_dims(input: &Tensor) -> Result<(usize, usize, usize), GradError> {
    match input.shape() {
        [b, c] => Ok((*b, *c, 1)),
        [b, c, l] => Ok((*b, *c, *l)),
        s => Err(GradError::Shape(format!(
            "batchnorm expects [B, C] or [B, C, L], got {s:?}"
        ))),
    }
}

/// Training-mode normalization using per-channel statistics over batch and length.
pub fn batchnorm_train(
    input: &Tensor,
    gamma: &[f64],
    beta: &[f64],
) -> Result<(Tensor, BatchNormCache), GradError> {
    let (b, c, l) = bn_dims(input)?;
    if gamma.len() != c || beta.len() != c {
        return Err(GradError::Shape("batchnorm affine size mismatch".into()));
    }
    let x = input.data();
    let n = (b * l) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for s in 0..b {
        for ch in 0..c {
            let row = &x[(s * c + ch) * l..(s * c + ch + 1) * l];
            mean[ch] += row.iter().sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    for s in 0..b {
        for ch in 0..c {
            let row = &x[(s * c + ch) * l..(s * c + ch + 1) * l];
            var[ch] += row.iter().map(|v| (v - mean[ch]).powi(2)).sum::<f64>();
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    for s in 0..b {
        for ch in 0..c {
            for t in 0..l {
                let i = (s * c + ch) * l + t;
                xhat[i] = (x[i] - mean[ch]) * inv_std[ch];
                out[i] = gamma[ch] * xhat[i] + beta[ch];
            }
        }
    }
    let t = Tensor::new(input.shape(), out)?;
    t.check_finite("batchnorm")?;
    Ok((
        t,
        BatchNormCache {
            shape: input.shape().to_vec(),
            xhat,
            inv_std,
            mean,
            var,
        },
    ))
}

/// Inference-mode normalization with running statistics.
pub fn batchnorm_eval(
    input: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    running_mean: &[f64],
    running_var: &[f64],
) -> Result<Tensor, GradError> {
    let (b, c, l) = bn_dims(input)?;
    if gamma.len() != c || running_mean.len() != c {
        return Err(GradError::Shape("batchnorm affine size mismatch".into()));
    }
    let x = input.data();
    let mut out = vec![0.0; x.len()];
    for s in 0..b {
        for ch in 0..c {
            let inv = 1.0 / (running_var[ch] + BN_EPS).sqrt();
            for t in 0..l {
                let i = (s * c + ch) * l + t;
                out[i] = gamma[ch] * (x[i] - running_mean[ch]) * inv + beta[ch];
            }
        }
    }
    let t = Tensor::new(input.shape(), out)?;
    t.check_finite("batchnorm")?;
    Ok(t)
}

/// Returns `(d_input, d_gamma, d_beta)`.
pub fn batchnorm_backward(
    cache: &BatchNormCache,
    gamma: &[f64],
    grad_out: &Tensor,
) -> Result<(Tensor, Vec<f64>, Vec<f64>), GradError> {
    let (b, c, l) = match cache.shape.as_slice() {
        [b, c] => (*b, *c, 1),
        [b, c, l] => (*b, *c, *l),
        _ => unreachable!(),
    };
    if grad_out.len() != cache.xhat.len() {
        return Err(GradError::Shape("batchnorm grad_out size mismatch".into()));
    }
    let dy = grad_out.data();
    let n = (b * l) as f64;
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    let mut sum_dxhat = vec![0.0; c];
    let mut sum_dxhat_xhat = vec![0.0; c];
    for s in 0..b {
        for ch in 0..c {
            for t in 0..l {
                let i = (s * c + ch) * l + t;
                dgamma[ch] += dy[i] * cache.xhat[i];
                dbeta[ch] += dy[i];
                let dxh = dy[i] * gamma[ch];
                sum_dxhat[ch] += dxh;
                sum_dxhat_xhat[ch] += dxh * cache.xhat[i];
            }
        }
    }
    let mut dx = vec![0.0; dy.len()];
    for s in 0..b {
        for ch in 0..c {
            for t in 0..l {
                let i = (s * c + ch) * l + t;
                let dxh = dy[i] * gamma[ch];
                dx[i] = cache.inv_std[ch] / n
                    * (n * dxh - sum_dxhat[ch] - cache.xhat[i] * sum_dxhat_xhat[ch]);
            }
        }
    }
    Ok((Tensor::new(&cache.shape, dx)?, dgamma, dbeta))
}

/// Per-channel batch normalization with learned scale/shift and running
/// statistics (momentum 0.1).
#[derive(Debug, Clone)]
pub struct BatchNorm1d {
    pub channels: usize,
    gamma: ParamId,
    beta: ParamId,
    running_mean: ParamId,
    running_var: ParamId,
    updates: ParamId,
}

impl BatchNorm1d {
    pub fn new(params: &mut ParameterSet, name: &str, channels: usize) -> Self {
        let gamma = params.add(
            format!("{name}.gamma"),
            Tensor::new(&[channels], vec![1.0; channels]).unwrap(),
        );
        let beta = params.add(format!("{name}.beta"), Tensor::zeros(&[channels]));
        let running_mean =
            params.add_buffer(format!("{name}.running_mean"), Tensor::zeros(&[channels]));
        let running_var = params.add_buffer(
            format!("{name}.running_var"),
            Tensor::new(&[channels], vec![1.0; channels]).unwrap(),
        );
        let updates = params.add_buffer(format!("{name}.updates"), Tensor::zeros(&[1]));
        Self {
            channels,
            gamma,
            beta,
            running_mean,
            running_var,
            updates,
        }
    }

    /// Number of training batches folded into the running statistics.
    pub fn updates(&self, params: &ParameterSet) -> f64 {
        params.value(self.updates)[0]
    }

    /// In training mode the running statistics are updated and a cache is
    /// returned; eval mode fails if no training batch was ever seen.
    pub fn forward(
        &self,
        params: &mut ParameterSet,
        input: &Tensor,
        mode: Mode,
    ) -> Result<(Tensor, Option<BatchNormCache>), GradError> {
        match mode {
            Mode::Train => {
                let (out, cache) =
                    batchnorm_train(input, params.value(self.gamma), params.value(self.beta))?;
                let (b, _, l) = bn_dims(input)?;
                let n = (b * l) as f64;
                let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
                for (r, m) in params
                    .value_mut(self.running_mean)
                    .iter_mut()
                    .zip(&cache.mean)
                {
                    *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
                }
                for (r, v) in params
                    .value_mut(self.running_var)
                    .iter_mut()
                    .zip(&cache.var)
                {
                    *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v * unbias;
                }
                params.value_mut(self.updates)[0] += 1.0;
                Ok((out, Some(cache)))
            }
            Mode::Eval => Ok((self.forward_eval(params, input)?, None)),
        }
    }

    /// Inference with the running statistics; needs no mutable access.
    pub fn forward_eval(&self, params: &ParameterSet, input: &Tensor) -> Result<Tensor, GradError> {
        if self.updates(params) == 0.0 {
            return Err(GradError::BatchNormUninitialized);
        }
        batchnorm_eval(
            input,
            params.value(self.gamma),
            params.value(self.beta),
            params.value(self.running_mean),
            params.value(self.running_var),
        )
    }

    pub fn backward(
        &self,
        params: &mut ParameterSet,
        cache: &BatchNormCache,
        grad_out: &Tensor,
    ) -> Result<Tensor, GradError> {
        let (dx, dg, db) = batchnorm_backward(cache, params.value(self.gamma), grad_out)?;
        for (a, b) in params.grad_mut(self.gamma).iter_mut().zip(&dg) {
            *a += b;
        }
        for (a, b) in params.grad_mut(self.beta).iter_mut().zip(&db) {
            *a += b;
        }
        Ok(dx)
    }
}
