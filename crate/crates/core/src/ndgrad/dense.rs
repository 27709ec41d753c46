use rand::Rng;

use super::tensor::gemm;
use super::{GradError, ParamId, ParameterSet, Tensor};

/// `y = W·x + b` for every row of a `[B, n]` input; `weight` is `[m, n]`.
pub fn dense(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor, GradError> {
    let (b, n) = input.as_batched2()?;
    let (m, wn) = match weight.shape() {
        [m, n] => (*m, *n),
        s => {
            return Err(GradError::Shape(format!(
                "weight must be [m, n], got {s:?}"
            )))
        }
    };
    if wn != n || bias.len() != m {
        return Err(GradError::Shape(format!(
            "dense: input width {n}, weight {m}x{wn}, bias {}",
            bias.len()
        )));
    }
    let mut out = vec![0.0; b * m];
    for row in out.chunks_mut(m) {
        row.copy_from_slice(bias.data());
    }
    gemm(
        b,
        n,
        m,
        1.0,
        input.data(),
        n,
        1,
        weight.data(),
        1,
        n,
        1.0,
        &mut out,
        m,
        1,
    );
    let shape: Vec<usize> = if input.shape().len() == 1 {
        vec![m]
    } else {
        vec![b, m]
    };
    let t = Tensor::new(&shape, out)?;
    t.check_finite("dense")?;
    Ok(t)
}

/// Returns `(d_input, d_weight, d_bias)`.
pub fn dense_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor), GradError> {
    let (b, n) = input.as_batched2()?;
    let m = weight.shape()[0];
    if grad_out.len() != b * m {
        return Err(GradError::Shape("dense grad_out size mismatch".into()));
    }
    let dy = grad_out.data();
    let mut dw = vec![0.0; m * n];
    gemm(
        m,
        b,
        n,
        1.0,
        dy,
        1,
        m,
        input.data(),
        n,
        1,
        0.0,
        &mut dw,
        n,
        1,
    );
    let mut db = vec![0.0; m];
    for row in dy.chunks(m) {
        for (a, g) in db.iter_mut().zip(row) {
            *a += g;
        }
    }
    let mut dx = vec![0.0; b * n];
    gemm(
        b,
        m,
        n,
        1.0,
        dy,
        m,
        1,
        weight.data(),
        n,
        1,
        0.0,
        &mut dx,
        n,
        1,
    );
    Ok((
        Tensor::new(input.shape(), dx)?,
        Tensor::new(&[m, n], dw)?,
        Tensor::new(&[m], db)?,
    ))
}

/// Fully connected layer.
#[derive(Debug, Clone)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    weight: ParamId,
    bias: ParamId,
}

impl Dense {
    /// Uniform fan-in initialization in ±1/√n.
    pub fn new<R: Rng>(
        params: &mut ParameterSet,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let w = (0..outputs * inputs)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let b = (0..outputs)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let weight = params.add(
            format!("{name}.weight"),
            Tensor::new(&[outputs, inputs], w).unwrap(),
        );
        let bias = params.add(format!("{name}.bias"), Tensor::new(&[outputs], b).unwrap());
        Self {
            inputs,
            outputs,
            weight,
            bias,
        }
    }

    pub fn weight_id(&self) -> ParamId {
        self.weight
    }

    pub fn bias_id(&self) -> ParamId {
        self.bias
    }

    pub fn forward(&self, params: &ParameterSet, input: &Tensor) -> Result<Tensor, GradError> {
        dense(
            input,
            &params.get(self.weight).value,
            &params.get(self.bias).value,
        )
    }

    pub fn backward(
        &self,
        params: &mut ParameterSet,
        input: &Tensor,
        grad_out: &Tensor,
    ) -> Result<Tensor, GradError> {
        let (dx, dw, db) = dense_backward(input, &params.get(self.weight).value, grad_out)?;
        for (a, b) in params.grad_mut(self.weight).iter_mut().zip(dw.data()) {
            *a += b;
        }
        for (a, b) in params.grad_mut(self.bias).iter_mut().zip(db.data()) {
            *a += b;
        }
        Ok(dx)
    }
}
