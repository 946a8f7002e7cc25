//! Reverse pass over a recorded [`Tape`].

use crate::grad::scalar::{sigmoid, Scalar};
use crate::model::network::{activation_slope, forward, Tape};
use crate::model::Layer;

/// Probabilities outside `[CLAMP, 1 - CLAMP]` are clamped in the loss.
pub const PROBABILITY_CLAMP: f64 = 1e-7;

/// Parameter gradient and (optionally) input gradient of a scalar whose
/// derivative with respect to the logit is `dlogit`.
pub(crate) fn backward<T: Scalar>(
    layers: &[Layer],
    params: &[T],
    tape: &Tape<T>,
    dlogit: T,
    want_input: bool,
) -> (Vec<T>, Option<Vec<T>>) {
    let mut grad = vec![T::zero(); params.len()];
    let mut offsets = Vec::with_capacity(layers.len());
    let mut offset = 0;
    for layer in layers {
        offsets.push(offset);
        offset += layer.parameter_count();
    }
    let mut delta = vec![dlogit];
    for (l, layer) in layers.iter().enumerate().rev() {
        let input = &tape.inputs[l];
        let pre = &tape.pre[l];
        let dz: Vec<T> = delta
            .iter()
            .zip(pre)
            .map(|(&d, &z)| d * activation_slope(layer.activation(), z))
            .collect();
        let p = &params[offsets[l]..offsets[l] + layer.parameter_count()];
        let g = &mut grad[offsets[l]..offsets[l] + layer.parameter_count()];
        let need_delta_in = l > 0 || want_input;
        let mut delta_in = vec![T::zero(); if need_delta_in { input.len() } else { 0 }];
        match *layer {
            Layer::Dense { input: n_in, output, .. } => {
                let (gw, gb) = g.split_at_mut(n_in * output);
                for o in 0..output {
                    let d = dz[o];
                    gb[o] += d;
                    let row = &mut gw[o * n_in..(o + 1) * n_in];
                    for (gwi, xi) in row.iter_mut().zip(input) {
                        *gwi += d * *xi;
                    }
                    if need_delta_in {
                        let wrow = &p[o * n_in..(o + 1) * n_in];
                        for (di, wi) in delta_in.iter_mut().zip(wrow) {
                            *di += *wi * d;
                        }
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
                let (gk, gb) = g.split_at_mut(channels * kernel);
                for c in 0..channels {
                    for pos in 0..positions {
                        let d = dz[c * positions + pos];
                        gb[c] += d;
                        for t in 0..kernel {
                            gk[c * kernel + t] += d * input[pos + t];
                            if need_delta_in {
                                delta_in[pos + t] += p[c * kernel + t] * d;
                            }
                        }
                    }
                }
            }
        }
        delta = delta_in;
    }
    let input_grad = if want_input { Some(delta) } else { None };
    (grad, input_grad)
}

/// Clamped binary cross-entropy of one instance (no regularizer) and its
/// derivative with respect to the logit.
pub(crate) fn bce_from_logit<T: Scalar>(logit: T, label: u8) -> (T, T) {
    let p = sigmoid(logit);
    let y = T::from_f64(f64::from(label));
    let pv = p.value();
    if pv < PROBABILITY_CLAMP || pv > 1.0 - PROBABILITY_CLAMP {
        let pc = pv.clamp(PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP);
        let loss = -(f64::from(label) * pc.ln() + (1.0 - f64::from(label)) * (1.0 - pc).ln());
        return (T::from_f64(loss), T::zero());
    }
    let loss = -(y * p.ln() + (T::one() - y) * (T::one() - p).ln());
    (loss, p - y)
}

/// Cross-entropy of one encoded instance and its parameter gradient
/// (no regularizer).
pub(crate) fn instance_bce_grad<T: Scalar>(layers: &[Layer], params: &[T], x: &[f64], label: u8) -> (T, Vec<T>) {
    let xt: Vec<T> = x.iter().map(|&v| T::from_f64(v)).collect();
    let (logit, tape) = forward(layers, params, &xt);
    let (loss, dlogit) = bce_from_logit(logit, label);
    let (grad, _) = backward(layers, params, &tape, dlogit, false);
    (loss, grad)
}
