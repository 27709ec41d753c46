use rand::Rng;

use super::activation::sigmoid_scalar;
use super::tensor::gemm;
use super::{GradError, ParamId, ParameterSet, Tensor};

/// Activations saved by [`LstmLayer::forward`] for backpropagation through time.
#[derive(Debug, Clone)]
pub struct LstmCache {
    batch: usize,
    steps: usize,
    input: Tensor,
    /// Post-activation gates `[B, T, 4H]` in i, f, g, o order.
    gates: Vec<f64>,
    cell: Vec<f64>,
    cell_tanh: Vec<f64>,
    hidden: Vec<f64>,
}

/// One LSTM layer with input, forget and output gates plus a tanh candidate,
/// zero initial state, returning the hidden state at every step.
///
/// Weights: `w_ih` is `[4H, I]`, `w_hh` is `[4H, H]`, a single bias `[4H]`.
#[derive(Debug, Clone)]
pub struct LstmLayer {
    pub input_size: usize,
    pub hidden_size: usize,
    w_ih: ParamId,
    w_hh: ParamId,
    bias: ParamId,
}

impl LstmLayer {
    /// Uniform ±1/√H initialization with the forget-gate bias shifted by +1.
    pub fn new<R: Rng>(
        params: &mut ParameterSet,
        name: &str,
        input_size: usize,
        hidden_size: usize,
        rng: &mut R,
    ) -> Self {
        let h = hidden_size;
        let bound = 1.0 / (h as f64).sqrt();
        let mut draw =
            |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..bound)).collect() };
        let wih = draw(4 * h * input_size);
        let whh = draw(4 * h * h);
        let mut b = draw(4 * h);
        for v in &mut b[h..2 * h] {
            *v += 1.0;
        }
        let w_ih = params.add(
            format!("{name}.w_ih"),
            Tensor::new(&[4 * h, input_size], wih).unwrap(),
        );
        let w_hh = params.add(
            format!("{name}.w_hh"),
            Tensor::new(&[4 * h, h], whh).unwrap(),
        );
        let bias = params.add(format!("{name}.bias"), Tensor::new(&[4 * h], b).unwrap());
        Self {
            input_size,
            hidden_size,
            w_ih,
            w_hh,
            bias,
        }
    }

    /// `input` is `[T, I]` or `[B, T, I]`; output has the same rank with `H` features.
    pub fn forward(
        &self,
        params: &ParameterSet,
        input: &Tensor,
    ) -> Result<(Tensor, LstmCache), GradError> {
        let (b, t_len, i_size) = input.as_batched3()?;
        if t_len == 0 {
            return Err(GradError::EmptySequence);
        }
        if i_size != self.input_size {
            return Err(GradError::Shape(format!(
                "lstm expects {} features, got {i_size}",
                self.input_size
            )));
        }
        let h = self.hidden_size;
        let g4 = 4 * h;
        let w_ih = params.value(self.w_ih);
        let w_hh = params.value(self.w_hh);
        let bias = params.value(self.bias);

        // Input contribution for every step at once.
        let mut pre = vec![0.0; b * t_len * g4];
        for row in pre.chunks_mut(g4) {
            row.copy_from_slice(bias);
        }
        gemm(
            b * t_len,
            i_size,
            g4,
            1.0,
            input.data(),
            i_size,
            1,
            w_ih,
            1,
            i_size,
            1.0,
            &mut pre,
            g4,
            1,
        );

        let mut gates = pre;
        let mut cell = vec![0.0; b * t_len * h];
        let mut cell_tanh = vec![0.0; b * t_len * h];
        let mut hidden = vec![0.0; b * t_len * h];
        for t in 0..t_len {
            if t > 0 {
                // gates[:, t] += h[:, t-1] · W_hhᵀ
                let (hprev, gslice) = (&hidden[(t - 1) * h..], &mut gates[t * g4..]);
                gemm(
                    b,
                    h,
                    g4,
                    1.0,
                    hprev,
                    t_len * h,
                    1,
                    w_hh,
                    1,
                    h,
                    1.0,
                    gslice,
                    t_len * g4,
                    1,
                );
            }
            for s in 0..b {
                let gi = (s * t_len + t) * g4;
                let ci = (s * t_len + t) * h;
                for j in 0..h {
                    let ig = sigmoid_scalar(gates[gi + j]);
                    let fg = sigmoid_scalar(gates[gi + h + j]);
                    let gg = gates[gi + 2 * h + j].tanh();
                    let og = sigmoid_scalar(gates[gi + 3 * h + j]);
                    gates[gi + j] = ig;
                    gates[gi + h + j] = fg;
                    gates[gi + 2 * h + j] = gg;
                    gates[gi + 3 * h + j] = og;
                    let c_prev = if t > 0 { cell[ci - h + j] } else { 0.0 };
                    let c = fg * c_prev + ig * gg;
                    let tc = c.tanh();
                    cell[ci + j] = c;
                    cell_tanh[ci + j] = tc;
                    hidden[ci + j] = og * tc;
                }
            }
        }
        let shape: Vec<usize> = if input.shape().len() == 2 {
            vec![t_len, h]
        } else {
            vec![b, t_len, h]
        };
        let out = Tensor::new(&shape, hidden.clone())?;
        out.check_finite("lstm")?;
        Ok((
            out,
            LstmCache {
                batch: b,
                steps: t_len,
                input: input.clone(),
                gates,
                cell,
                cell_tanh,
                hidden,
            },
        ))
    }

    /// Backpropagation through time; `grad_out` is the gradient with respect
    /// to every returned hidden state.
    pub fn backward(
        &self,
        params: &mut ParameterSet,
        cache: &LstmCache,
        grad_out: &Tensor,
    ) -> Result<Tensor, GradError> {
        let (b, t_len, h) = (cache.batch, cache.steps, self.hidden_size);
        let g4 = 4 * h;
        let i_size = self.input_size;
        if grad_out.len() != b * t_len * h {
            return Err(GradError::Shape("lstm grad_out size mismatch".into()));
        }
        let dh_out = grad_out.data();
        let mut dpre = vec![0.0; b * t_len * g4];
        let mut dh_next = vec![0.0; b * h];
        let mut dc_next = vec![0.0; b * h];
        let mut dw_hh = vec![0.0; g4 * h];
        {
            let w_hh = params.value(self.w_hh);
            for t in (0..t_len).rev() {
                for s in 0..b {
                    let gi = (s * t_len + t) * g4;
                    let ci = (s * t_len + t) * h;
                    for j in 0..h {
                        let ig = cache.gates[gi + j];
                        let fg = cache.gates[gi + h + j];
                        let gg = cache.gates[gi + 2 * h + j];
                        let og = cache.gates[gi + 3 * h + j];
                        let tc = cache.cell_tanh[ci + j];
                        let dh = dh_out[ci + j] + dh_next[s * h + j];
                        let d_o = dh * tc;
                        let dc = dc_next[s * h + j] + dh * og * (1.0 - tc * tc);
                        let c_prev = if t > 0 { cache.cell[ci - h + j] } else { 0.0 };
                        dpre[gi + j] = dc * gg * ig * (1.0 - ig);
                        dpre[gi + h + j] = dc * c_prev * fg * (1.0 - fg);
                        dpre[gi + 2 * h + j] = dc * ig * (1.0 - gg * gg);
                        dpre[gi + 3 * h + j] = d_o * og * (1.0 - og);
                        dc_next[s * h + j] = dc * fg;
                    }
                }
                let dg_t = &dpre[t * g4..];
                // dh_next = dgates_t · W_hh
                gemm(
                    b,
                    g4,
                    h,
                    1.0,
                    dg_t,
                    t_len * g4,
                    1,
                    w_hh,
                    h,
                    1,
                    0.0,
                    &mut dh_next,
                    h,
                    1,
                );
                if t > 0 {
                    // dW_hh += dgates_tᵀ · h_{t-1}
                    let hprev = &cache.hidden[(t - 1) * h..];
                    gemm(
                        g4,
                        b,
                        h,
                        1.0,
                        dg_t,
                        1,
                        t_len * g4,
                        hprev,
                        t_len * h,
                        1,
                        1.0,
                        &mut dw_hh,
                        h,
                        1,
                    );
                }
            }
        }
        let rows = b * t_len;
        let mut dw_ih = vec![0.0; g4 * i_size];
        gemm(
            g4,
            rows,
            i_size,
            1.0,
            &dpre,
            1,
            g4,
            cache.input.data(),
            i_size,
            1,
            0.0,
            &mut dw_ih,
            i_size,
            1,
        );
        let mut dx = vec![0.0; rows * i_size];
        gemm(
            rows,
            g4,
            i_size,
            1.0,
            &dpre,
            g4,
            1,
            params.value(self.w_ih),
            i_size,
            1,
            0.0,
            &mut dx,
            i_size,
            1,
        );
        for (a, v) in params.grad_mut(self.w_ih).iter_mut().zip(&dw_ih) {
            *a += v;
        }
        for (a, v) in params.grad_mut(self.w_hh).iter_mut().zip(&dw_hh) {
            *a += v;
        }
        let db = params.grad_mut(self.bias);
        for row in dpre.chunks(g4) {
            for (a, v) in db.iter_mut().zip(row) {
                *a += v;
            }
        }
        Tensor::new(cache.input.shape(), dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_zero_hidden() {
        let mut ps = ParameterSet::new();
        let layer = LstmLayer::new(&mut ps, "l", 3, 4, &mut ChaCha8Rng::seed_from_u64(0));
        for p in ps.iter_mut() {
            p.value.fill(0.0);
        }
        let x = Tensor::new(&[5, 3], (0..15).map(|i| i as f64 * 0.1).collect()).unwrap();
        let (y, _) = layer.forward(&ps, &x).unwrap();
        assert!(y.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_step_matches_cell_equations() {
        let mut ps = ParameterSet::new();
        let layer = LstmLayer::new(&mut ps, "l", 2, 1, &mut ChaCha8Rng::seed_from_u64(9));
        let x = Tensor::new(&[1, 2], vec![0.3, -0.7]).unwrap();
        let (y, _) = layer.forward(&ps, &x).unwrap();
        let w = ps.value(layer.w_ih);
        let b = ps.value(layer.bias);
        let pre: Vec<f64> = (0..4)
            .map(|g| w[g * 2] * 0.3 + w[g * 2 + 1] * -0.7 + b[g])
            .collect();
        let c = sigmoid_scalar(pre[0]) * pre[2].tanh();
        let h = sigmoid_scalar(pre[3]) * c.tanh();
        assert!((y.data()[0] - h).abs() < 1e-15);
    }

    #[test]
    fn empty_sequence_rejected() {
        let mut ps = ParameterSet::new();
        let layer = LstmLayer::new(&mut ps, "l", 2, 2, &mut ChaCha8Rng::seed_from_u64(0));
        let x = Tensor::new(&[1, 0, 2], vec![]).unwrap_or_else(|_| Tensor::zeros(&[1, 0, 2]));
        assert!(matches!(
            layer.forward(&ps, &x),
            Err(GradError::EmptySequence)
        ));
    }
}
