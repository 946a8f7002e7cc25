//! The attribution algorithms, on encoded inputs.

use crate::error::{Error, Result};
use crate::grad::scalar::sigmoid;
use crate::grad::{input_gradient_encoded, OutputTarget};
use crate::grad::scalar::Dual;
use crate::model::network::{activate, activation_slope, forward, layer_pre_activation};
use crate::model::{Activation, Layer, TrainedModel};

/// DeepLIFT falls back to the local derivative when `|Δin|` is below this.
pub const DEEPLIFT_GUARD: f64 = 1e-7;

/// A scalar function of the encoded input with its gradient.
pub trait Differentiable {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;

    /// Points in (0, 1) where the gradient along `b + α (x - b)` jumps.
    fn path_kinks(&self, _x: &[f64], _b: &[f64]) -> Vec<f64> {
        Vec::new()
    }
}

/// One output of a trained model.
#[derive(Debug, Clone, Copy)]
pub struct ModelOutput<'a> {
    pub model: &'a TrainedModel,
    pub target: OutputTarget,
}

impl Differentiable for ModelOutput<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        let z = self.model.logit_encoded(x);
        match self.target {
            OutputTarget::Logit => z,
            OutputTarget::Probability => sigmoid(z),
        }
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        input_gradient_encoded(self.model, x, self.target)
    }

    fn path_kinks(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        relu_kinks(self.model, x, b)
    }
}

/// Cap on the kinks tracked along one path.
const MAX_KINKS: usize = 100_000;

/// Walks the straight path from `b` to `x` and collects every α where a
/// relu pre-activation changes sign. Between kinks a relu network is affine
/// in α, so the nearest root of the linearized pre-activations is exact.
fn relu_kinks(m: &TrainedModel, x: &[f64], b: &[f64]) -> Vec<f64> {
    let layers = m.layers();
    if !layers.iter().any(|l| l.activation() == Some(Activation::Relu)) {
        return Vec::new();
    }
    let params: Vec<Dual> = m.parameters.values.iter().map(|&p| Dual::new(p, 0.0)).collect();
    let mut kinks = Vec::new();
    let mut alpha = 0.0;
    while kinks.len() < MAX_KINKS {
        let point: Vec<Dual> = x
            .iter()
            .zip(b)
            .map(|(xi, bi)| Dual::new(bi + alpha * (xi - bi), xi - bi))
            .collect();
        let (_, tape) = forward(&layers, &params, &point);
        let floor = alpha + 1e-12;
        let mut next = f64::INFINITY;
        for (layer, pre) in layers.iter().zip(&tape.pre) {
            if layer.activation() != Some(Activation::Relu) {
                continue;
            }
            for z in pre {
                if z.eps != 0.0 {
                    let t = alpha - z.re / z.eps;
                    if t > floor && t < next {
                        next = t;
                    }
                }
            }
        }
        if next >= 1.0 {
            break;
        }
        kinks.push(next);
        alpha = next;
    }
    kinks
}

/// `(x_i - b_i) ∂f/∂x_i` at `x`.
pub fn gradient_x_input_fn(f: &dyn Differentiable, x: &[f64], b: &[f64]) -> Vec<f64> {
    f.gradient(x).iter().zip(x.iter().zip(b)).map(|(g, (xi, bi))| (xi - bi) * g).collect()
}

/// Midpoint-rule Integrated Gradients over `steps` equal cells. Cells that
/// contain a gradient kink are split there, each piece weighted by its
/// length, which makes the rule exact for piecewise-linear outputs.
pub fn integrated_gradients_fn(f: &dyn Differentiable, x: &[f64], b: &[f64], steps: usize) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::Config("integrated gradients needs steps >= 1".into()));
    }
    let kinks = f.path_kinks(x, b);
    let mut acc = vec![0.0; x.len()];
    let mut point = vec![0.0; x.len()];
    let mut add = |lo: f64, hi: f64, acc: &mut [f64]| {
        let alpha = 0.5 * (lo + hi);
        for i in 0..x.len() {
            point[i] = b[i] + alpha * (x[i] - b[i]);
        }
        let w = (hi - lo) * steps as f64;
        for (a, g) in acc.iter_mut().zip(f.gradient(&point)) {
            *a += w * g;
        }
    };
    let mut next_kink = kinks.iter().copied().peekable();
    for k in 0..steps {
        let (lo, hi) = (k as f64 / steps as f64, (k + 1) as f64 / steps as f64);
        if next_kink.peek().is_none_or(|&t| t >= hi) {
            // Same arithmetic as the plain rule when no kink is present.
            add(lo, hi, &mut acc);
            continue;
        }
        let mut start = lo;
        while let Some(&t) = next_kink.peek() {
            if t >= hi {
                break;
            }
            if t > start {
                add(start, t, &mut acc);
                start = t;
            }
            next_kink.next();
        }
        add(start, hi, &mut acc);
    }
    Ok(acc
        .iter()
        .zip(x.iter().zip(b))
        .map(|(a, (xi, bi))| (xi - bi) * a / steps as f64)
        .collect())
}

/// Exact Shapley values over groups of encoded columns; every column of a
/// group takes `x` or `b` together.
pub fn shapley_fn(f: &dyn Differentiable, x: &[f64], b: &[f64], groups: &[Vec<usize>], max_features: usize) -> Result<Vec<f64>> {
    let d = groups.len();
    if d > max_features {
        return Err(Error::Config(format!(
            "exact Shapley over {d} features exceeds the limit of {max_features}; use integrated gradients or DeepLIFT"
        )));
    }
    if d >= usize::BITS as usize - 1 {
        return Err(Error::Config("too many features for coalition enumeration".into()));
    }
    let coalitions = 1usize << d;
    let mut point = b.to_vec();
    let values: Vec<f64> = (0..coalitions)
        .map(|mask| {
            for (g, cols) in groups.iter().enumerate() {
                let src = if mask >> g & 1 == 1 { x } else { b };
                for &c in cols {
                    point[c] = src[c];
                }
            }
            f.value(&point)
        })
        .collect();
    // weight(s) = s! (d - s - 1)! / d!
    let mut weight = vec![0.0; d.max(1)];
    for (s, w) in weight.iter_mut().enumerate().take(d) {
        let mut v = 1.0 / d as f64;
        // 1 / (d * C(d-1, s))
        for j in 0..s {
            v *= (j + 1) as f64 / (d - 1 - j) as f64;
        }
        *w = v;
    }
    let mut phi = vec![0.0; d];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        for mask in 0..coalitions {
            if mask & bit == 0 {
                let s = mask.count_ones() as usize;
                *p += weight[s] * (values[mask | bit] - values[mask]);
            }
        }
    }
    Ok(phi)
}

fn rescale(act: Option<Activation>, z: f64, z_ref: f64) -> f64 {
    let dz = z - z_ref;
    if dz.abs() < DEEPLIFT_GUARD {
        activation_slope(act, z)
    } else {
        (activate(act, z) - activate(act, z_ref)) / dz
    }
}

fn forward_pre(layers: &[Layer], params: &[f64], x: &[f64]) -> (Vec<Vec<f64>>, f64) {
    let mut pres = Vec::with_capacity(layers.len());
    let mut current = x.to_vec();
    let mut offset = 0;
    for layer in layers {
        let n = layer.parameter_count();
        let pre = layer_pre_activation(layer, &params[offset..offset + n], &current);
        current = pre.iter().map(|&z| activate(layer.activation(), z)).collect();
        pres.push(pre);
        offset += n;
    }
    (pres, current[0])
}

/// DeepLIFT Rescale multipliers and scores for one model output.
pub fn deeplift_encoded(m: &TrainedModel, x: &[f64], r: &[f64], target: OutputTarget) -> Vec<f64> {
    let layers = m.layers();
    let params = &m.parameters.values;
    let (pre_x, fx) = forward_pre(&layers, params, x);
    let (pre_r, fr) = forward_pre(&layers, params, r);
    let seed = match target {
        OutputTarget::Logit => 1.0,
        OutputTarget::Probability => {
            let d = fx - fr;
            if d.abs() < DEEPLIFT_GUARD {
                let p = sigmoid(fx);
                p * (1.0 - p)
            } else {
                (sigmoid(fx) - sigmoid(fr)) / d
            }
        }
    };
    let mut offsets = Vec::with_capacity(layers.len());
    let mut offset = 0;
    for layer in &layers {
        offsets.push(offset);
        offset += layer.parameter_count();
    }
    let mut mult = vec![seed];
    for (l, layer) in layers.iter().enumerate().rev() {
        let act = layer.activation();
        let m_pre: Vec<f64> = mult
            .iter()
            .zip(pre_x[l].iter().zip(&pre_r[l]))
            .map(|(mo, (&z, &zr))| mo * rescale(act, z, zr))
            .collect();
        let p = &params[offsets[l]..offsets[l] + layer.parameter_count()];
        let mut m_in = vec![0.0; layer.input_width()];
        match *layer {
            Layer::Dense { input, output, .. } => {
                for o in 0..output {
                    let row = &p[o * input..(o + 1) * input];
                    for (mi, w) in m_in.iter_mut().zip(row) {
                        *mi += w * m_pre[o];
                    }
                }
            }
            Layer::Conv1d {
                length,
                channels,
                kernel,
                ..
            } => {
                let positions = length - kernel + 1;
                for c in 0..channels {
                    for pos in 0..positions {
                        let d = m_pre[c * positions + pos];
                        for t in 0..kernel {
                            m_in[pos + t] += p[c * kernel + t] * d;
                        }
                    }
                }
            }
        }
        mult = m_in;
    }
    mult.iter().zip(x.iter().zip(r)).map(|(mi, (xi, ri))| mi * (xi - ri)).collect()
}
