use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{GradError, ParameterSet};

/// Which coordinates of each trainable tensor to perturb.
#[derive(Debug, Clone, Copy)]
pub enum Coordinates {
    All,
    /// At most `per_tensor` seeded random coordinates from every tensor.
    Sample {
        per_tensor: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone)]
pub struct TensorError {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Tensor name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    /// Coordinates rejected as non-differentiable within the step.
    pub skipped: usize,
    pub tensors: Vec<TensorError>,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_rel_error < tolerance
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the gradients stored in `params` with central differences of
/// `loss`. The closure receives a perturbed copy of `params`; it must be a
/// pure function of the values it sees (fix dropout masks by reseeding).
pub fn grad_check<F>(
    params: &ParameterSet,
    loss: F,
    h: f64,
    coords: Coordinates,
) -> Result<GradCheckReport, GradError>
where
    F: FnMut(&mut ParameterSet) -> Result<f64, GradError>,
{
    run(params, loss, h, coords, None)
}

/// Like [`grad_check`], but skips coordinates where the central difference
/// has not settled at `h`: a kink (ReLU, max-pool or |x| switch) inside the
/// step, or truncation error swamping a near-zero gradient. Two signatures
/// are tested against `kink_tolerance` (relative to the gradient): the
/// central estimate moving between `h` and `h / 2`, and the forward/backward
/// slope gap failing to halve with the step, which catches a kink right at
/// the point. With [`Coordinates::Sample`] replacements are drawn, up to
/// eight attempts per requested coordinate. A wrong analytic gradient on a
/// smooth stretch still fails.
pub fn grad_check_smooth<F>(
    params: &ParameterSet,
    loss: F,
    h: f64,
    coords: Coordinates,
    kink_tolerance: f64,
) -> Result<GradCheckReport, GradError>
where
    F: FnMut(&mut ParameterSet) -> Result<f64, GradError>,
{
    run(params, loss, h, coords, Some(kink_tolerance))
}

fn run<F>(
    params: &ParameterSet,
    mut loss: F,
    h: f64,
    coords: Coordinates,
    kink_tolerance: Option<f64>,
) -> Result<GradCheckReport, GradError>
where
    F: FnMut(&mut ParameterSet) -> Result<f64, GradError>,
{
    let mut work = params.clone();
    // the unperturbed loss, needed only by the settle test
    let centre = match kink_tolerance {
        Some(_) => Some(loss(&mut work)?),
        None => None,
    };
    let mut at = |work: &mut ParameterSet, id: super::ParamId, i: usize, v: f64| {
        work.copy_values_from(params)?;
        work.value_mut(id)[i] = v;
        loss(work)
    };
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped: 0,
        tensors: Vec::new(),
    };
    for (idx, p) in params.iter().enumerate() {
        if !p.trainable {
            continue;
        }
        let n = p.value.len();
        let (order, wanted, attempts): (Vec<usize>, usize, usize) = match coords {
            Coordinates::All => ((0..n).collect(), n, n),
            Coordinates::Sample { per_tensor, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(
                    seed ^ (idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                );
                let wanted = per_tensor.min(n);
                let attempts = if kink_tolerance.is_some() {
                    (8 * wanted).min(n)
                } else {
                    wanted
                };
                (sample(&mut rng, n, attempts).into_vec(), wanted, attempts)
            }
        };
        let id = super::ParamId(idx);
        let (mut tensor_max, mut checked) = (0.0f64, 0);
        for &i in order.iter().take(attempts) {
            if checked == wanted {
                break;
            }
            let orig = p.value.data()[i];
            let up = at(&mut work, id, i, orig + h)?;
            let down = at(&mut work, id, i, orig - h)?;
            let numeric = (up - down) / (2.0 * h);
            if let (Some(tol), Some(centre)) = (kink_tolerance, centre) {
                // forward minus backward slope: ~h f'' when smooth, so it halves with h
                let gap = (up - 2.0 * centre + down) / h;
                let half_up = at(&mut work, id, i, orig + h / 2.0)?;
                let half_down = at(&mut work, id, i, orig - h / 2.0)?;
                let half = (half_up - 2.0 * centre + half_down) / (h / 2.0);
                // the central estimate itself drifts when a kink sits off-centre
                let drift = numeric - (half_up - half_down) / h;
                let scale = tol * numeric.abs().max(1e-8);
                if (gap - 2.0 * half).abs() > scale || drift.abs() > scale {
                    report.skipped += 1;
                    continue;
                }
            }
            let err = relative_error(p.grad.data()[i], numeric);
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((p.name.clone(), i));
            }
            tensor_max = tensor_max.max(err);
            checked += 1;
        }
        report.checked += checked;
        report.tensors.push(TensorError {
            name: p.name.clone(),
            checked,
            max_rel_error: tensor_max,
        });
    }
    Ok(report)
}
