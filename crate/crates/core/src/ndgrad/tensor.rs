use super::GradError;

/// Dense row-major buffer with up to three axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self, GradError> {
        let expected: usize = shape.iter().product();
        if shape.is_empty() || shape.len() > 3 {
            return Err(GradError::Shape(format!(
                "unsupported rank {}",
                shape.len()
            )));
        }
        if expected != data.len() {
            return Err(GradError::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Reinterpret with a new shape of the same element count.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, GradError> {
        let n: usize = shape.iter().product();
        if n != self.data.len() || shape.is_empty() || shape.len() > 3 {
            return Err(GradError::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// Fails if any value is NaN or infinite.
    pub fn check_finite(&self, op: &'static str) -> Result<(), GradError> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(GradError::NonFinite(op))
        }
    }

    /// `[B, C, L]` view of a rank-2 `[C, L]` or rank-3 tensor.
    pub(crate) fn as_batched3(&self) -> Result<(usize, usize, usize), GradError> {
        match self.shape.as_slice() {
            [c, l] => Ok((1, *c, *l)),
            [b, c, l] => Ok((*b, *c, *l)),
            s => Err(GradError::Shape(format!(
                "expected [C, L] or [B, C, L], got {s:?}"
            ))),
        }
    }

    /// `[B, N]` view of a rank-1 `[N]` or rank-2 tensor.
    pub(crate) fn as_batched2(&self) -> Result<(usize, usize), GradError> {
        match self.shape.as_slice() {
            [n] => Ok((1, *n)),
            [b, n] => Ok((*b, *n)),
            s => Err(GradError::Shape(format!(
                "expected [N] or [B, N], got {s:?}"
            ))),
        }
    }
}

/// `c = alpha * a·b + beta * c` for row-major operands with explicit strides.
///
/// `a` is `m×k` with strides `(rsa, csa)`, `b` is `k×n` with `(rsb, csb)`,
/// `c` is `m×n` with `(rsc, csc)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    debug_assert!(k == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() > (m - 1) * rsc + (n - 1) * csc);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}
