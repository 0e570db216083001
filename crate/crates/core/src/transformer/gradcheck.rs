use rand::Rng;

use super::model::{compute_gradients, forward, ModelInput, Objective};
use super::params::ModelParams;
use super::ModelError;

/// Analytic and central-difference derivative of one parameter coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateCheck {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl CoordinateCheck {
    /// `|a - n| / max(|a|, |n|, floor)`; the floor keeps coordinates whose
    /// true derivative is ~0 from turning round-off into huge ratios.
    pub fn relative_error(&self, floor: f64) -> f64 {
        (self.analytic - self.numeric).abs() / self.analytic.abs().max(self.numeric.abs()).max(floor)
    }
}

fn loss_at<O: Objective<f64> + ?Sized>(objective: &O, params: &ModelParams<f64>, input: &ModelInput<f64>) -> Result<f64, ModelError> {
    let acts = forward(params, input)?;
    Ok(objective.loss(acts.output(), params))
}

/// Compares backpropagated gradients with central differences of step `eps`
/// on `samples` coordinates. Each sample picks a tensor uniformly, then a
/// coordinate in it; embedding rows are restricted to ids and positions
/// present in `input` since all other rows have zero gradient.
pub fn check_gradients<O: Objective<f64> + ?Sized, R: Rng + ?Sized>(
    objective: &O,
    params: &ModelParams<f64>,
    input: &ModelInput<f64>,
    samples: usize,
    eps: f64,
    rng: &mut R,
) -> Result<Vec<CoordinateCheck>, ModelError> {
    let (_, grads) = compute_gradients(objective, params, input)?;
    let grad_tensors = grads.named_tensors();
    let d = params.config.hidden_dim;
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        let t = rng.random_range(0..grad_tensors.len());
        let (name, g) = &grad_tensors[t];
        let index = match name.as_str() {
            "embeddings.token" => input.ids[rng.random_range(0..input.ids.len())] * d + rng.random_range(0..d),
            "embeddings.position" => input.positions[rng.random_range(0..input.positions.len())] * d + rng.random_range(0..d),
            _ => rng.random_range(0..g.len()),
        };
        let analytic = g.as_slice().expect("contiguous")[index];
        let mut shifted = params.clone();
        let slot = |p: &mut ModelParams<f64>, delta: f64| {
            let mut tensors = p.tensors_mut();
            tensors[t].as_slice_mut().expect("contiguous")[index] += delta;
        };
        slot(&mut shifted, eps);
        let up = loss_at(objective, &shifted, input)?;
        slot(&mut shifted, -2.0 * eps);
        let down = loss_at(objective, &shifted, input)?;
        out.push(CoordinateCheck { tensor: name.clone(), index, analytic, numeric: (up - down) / (2.0 * eps) });
    }
    Ok(out)
}
