//! Central finite-difference oracles for the analytic derivatives.

use crate::grad::OutputTarget;
use crate::grad::scalar::sigmoid;
use crate::model::TrainedModel;

/// Default step on the standardized scale.
pub const FD_STEP: f64 = 1e-4;

fn central(mut f: impl FnMut(&[f64]) -> f64, at: &[f64], h: f64) -> Vec<f64> {
    let mut x = at.to_vec();
    (0..x.len())
        .map(|k| {
            let orig = x[k];
            x[k] = orig + h;
            let up = f(&x);
            x[k] = orig - h;
            let down = f(&x);
            x[k] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Finite-difference gradient of the per-instance loss with respect to θ.
pub fn param_gradient(m: &TrainedModel, x: &[f64], label: u8, h: f64) -> Vec<f64> {
    let mut probe = m.clone();
    let theta = m.parameters.values.clone();
    central(
        |t| {
            probe.parameters.values.copy_from_slice(t);
            probe.loss_encoded(x, label)
        },
        &theta,
        h,
    )
}

/// Finite-difference gradient of an output with respect to the encoded input.
pub fn input_gradient(m: &TrainedModel, x: &[f64], of: OutputTarget, h: f64) -> Vec<f64> {
    central(
        |z| match of {
            OutputTarget::Logit => m.logit_encoded(z),
            OutputTarget::Probability => sigmoid(m.logit_encoded(z)),
        },
        x,
        h,
    )
}
