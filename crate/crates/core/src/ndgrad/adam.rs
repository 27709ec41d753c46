use super::{GradError, ParameterSet};

/// Bias-corrected Adam over the trainable tensors of a [`ParameterSet`].
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParameterSet, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One update using the gradients currently stored in `params`.
    pub fn step(&mut self, params: &mut ParameterSet) -> Result<(), GradError> {
        if params.len() != self.m.len()
            || params
                .iter()
                .zip(&self.m)
                .any(|(p, m)| p.value.len() != m.len())
        {
            return Err(GradError::Shape(
                "optimizer state does not match parameters".into(),
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if !p.trainable {
                continue;
            }
            let grad = p.grad.data();
            for (((theta, g), mi), vi) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(grad)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *theta -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            if !p.value.data().iter().all(|x| x.is_finite()) {
                return Err(GradError::NonFinite("adam"));
            }
        }
        Ok(())
    }
}
