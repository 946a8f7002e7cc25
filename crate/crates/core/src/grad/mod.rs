//! Parameter and input gradients, Hessian-vector products, exact Hessians
//! and finite-difference oracles.

pub(crate) mod backprop;
pub mod fd;
pub(crate) mod hessian;
pub mod scalar;

use serde::{Deserialize, Serialize};

use crate::data::Instance;
use crate::error::{Error, Result};
use crate::grad::backprop::{backward, instance_bce_grad};
use crate::grad::scalar::sigmoid;
use crate::model::network::forward;
use crate::model::TrainedModel;

pub use backprop::PROBABILITY_CLAMP;
pub use hessian::{exact_hessian, exact_hessian_with_limit, hvp, HessianMethod, HessianOperator};

/// Flat gradient aligned with the model's parameter layout.
pub type GradientVector = Vec<f64>;

/// Which model output a gradient or attribution refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputTarget {
    Logit,
    Probability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputGradient {
    /// One entry per encoded (standardized, one-hot) input column.
    pub encoded: Vec<f64>,
    /// One entry per schema feature; sums of the encoded components.
    pub folded: Vec<f64>,
}

fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("{what}: entry {i} is not finite")));
    }
    Ok(())
}

/// Gradient of `loss(m, ·)` at an encoded input, regularizer included.
pub fn param_gradient_encoded(m: &TrainedModel, x: &[f64], label: u8) -> GradientVector {
    let (_, mut g) = instance_bce_grad(&m.layers(), &m.parameters.values, x, label);
    let l2 = m.l2();
    for (gk, p) in g.iter_mut().zip(&m.parameters.values) {
        *gk += l2 * p;
    }
    g
}

/// Reverse-mode gradient of the per-instance loss with respect to θ.
pub fn param_gradient(m: &TrainedModel, z: &Instance) -> Result<GradientVector> {
    let g = param_gradient_encoded(m, &m.encode(z)?, z.label);
    ensure_finite(&g, "parameter gradient")?;
    Ok(g)
}

/// Gradient of the chosen output with respect to the encoded input.
pub fn input_gradient_encoded(m: &TrainedModel, x: &[f64], of: OutputTarget) -> Vec<f64> {
    let layers = m.layers();
    let (logit, tape) = forward(&layers, &m.parameters.values, x);
    let seed = match of {
        OutputTarget::Logit => 1.0,
        OutputTarget::Probability => {
            let p = sigmoid(logit);
            p * (1.0 - p)
        }
    };
    let (_, input) = backward(&layers, &m.parameters.values, &tape, seed, true);
    input.expect("input gradient requested")
}

pub fn input_gradient(m: &TrainedModel, x: &Instance, of: OutputTarget) -> Result<InputGradient> {
    let encoded = input_gradient_encoded(m, &m.encode(x)?, of);
    ensure_finite(&encoded, "input gradient")?;
    let folded = m.encoder.fold(&encoded);
    Ok(InputGradient { encoded, folded })
}
