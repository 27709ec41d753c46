use super::{GradError, Tensor};

/// Output of [`maxpool1d`]: pooled values plus the flat input index each
/// output was taken from.
#[derive(Debug, Clone)]
pub struct Pooled {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

/// Non-overlapping max pooling along the last axis; the trailing remainder
/// is dropped and ties go to the earliest index.
pub fn maxpool1d(input: &Tensor, size: usize) -> Result<Pooled, GradError> {
    let (b, c, l) = input.as_batched3()?;
    if size == 0 || l < size {
        return Err(GradError::Shape(format!(
            "cannot pool length {l} with size {size}"
        )));
    }
    let lo = l / size;
    let mut out = Vec::with_capacity(b * c * lo);
    let mut argmax = Vec::with_capacity(b * c * lo);
    let x = input.data();
    for row in 0..b * c {
        let base = row * l;
        for t in 0..lo {
            let start = base + t * size;
            let mut best = start;
            for i in start + 1..start + size {
                if x[i] > x[best] {
                    best = i;
                }
            }
            out.push(x[best]);
            argmax.push(best);
        }
    }
    let shape: Vec<usize> = if input.shape().len() == 2 {
        vec![c, lo]
    } else {
        vec![b, c, lo]
    };
    Ok(Pooled {
        output: Tensor::new(&shape, out)?,
        argmax,
    })
}

/// Routes each output gradient to the input position that won the max.
pub fn maxpool1d_backward(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor,
) -> Result<Tensor, GradError> {
    if grad_out.len() != argmax.len() {
        return Err(GradError::Shape("maxpool grad_out size mismatch".into()));
    }
    let mut g = Tensor::zeros(input_shape);
    let gd = g.data_mut();
    for (&i, &d) in argmax.iter().zip(grad_out.data()) {
        gd[i] += d;
    }
    Ok(g)
}
