//! Forward evaluation of a layer stack, generic over [`Scalar`].

use super::arch::{Activation, Layer};
use crate::grad::scalar::{sigmoid, Scalar};

/// Per-layer values kept by the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct Tape<T> {
    /// Input to each layer.
    pub inputs: Vec<Vec<T>>,
    /// Pre-activation output of each layer.
    pub pre: Vec<Vec<T>>,
}

pub(crate) fn activate<T: Scalar>(act: Option<Activation>, z: T) -> T {
    match act {
        None => z,
        Some(Activation::Relu) => {
            if z.value() > 0.0 {
                z
            } else {
                T::zero()
            }
        }
        Some(Activation::Sigmoid) => sigmoid(z),
    }
}

/// Derivative of the activation at pre-activation `z`.
pub(crate) fn activation_slope<T: Scalar>(act: Option<Activation>, z: T) -> T {
    match act {
        None => T::one(),
        Some(Activation::Relu) => {
            if z.value() > 0.0 {
                T::one()
            } else {
                T::zero()
            }
        }
        Some(Activation::Sigmoid) => {
            let s = sigmoid(z);
            s * (T::one() - s)
        }
    }
}

pub(crate) fn layer_pre_activation<T: Scalar>(layer: &Layer, params: &[T], input: &[T]) -> Vec<T> {
    match *layer {
        Layer::Dense { input: n_in, output, .. } => {
            let (w, b) = params.split_at(n_in * output);
            (0..output)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    let mut acc = b[o];
                    for (wi, xi) in row.iter().zip(input) {
                        acc += *wi * *xi;
                    }
                    acc
                })
                .collect()
        }
        Layer::Conv1d {
            length,
            channels,
            kernel,
            ..
        } => {
            let positions = length - kernel + 1;
            let (k, b) = params.split_at(channels * kernel);
            let mut out = Vec::with_capacity(channels * positions);
            for c in 0..channels {
                let taps = &k[c * kernel..(c + 1) * kernel];
                for p in 0..positions {
                    let mut acc = b[c];
                    for (t, w) in taps.iter().enumerate() {
                        acc += *w * input[p + t];
                    }
                    out.push(acc);
                }
            }
            out
        }
    }
}

/// Runs the stack and returns the logit plus the tape.
pub(crate) fn forward<T: Scalar>(layers: &[Layer], params: &[T], x: &[T]) -> (T, Tape<T>) {
    let mut tape = Tape {
        inputs: Vec::with_capacity(layers.len()),
        pre: Vec::with_capacity(layers.len()),
    };
    let mut current = x.to_vec();
    let mut offset = 0;
    for layer in layers {
        let n = layer.parameter_count();
        let pre = layer_pre_activation(layer, &params[offset..offset + n], &current);
        let out: Vec<T> = pre.iter().map(|&z| activate(layer.activation(), z)).collect();
        tape.inputs.push(std::mem::replace(&mut current, out));
        tape.pre.push(pre);
        offset += n;
    }
    debug_assert_eq!(current.len(), 1);
    (current[0], tape)
}

/// Logit only, without keeping a tape.
pub(crate) fn logit(layers: &[Layer], params: &[f64], x: &[f64]) -> f64 {
    let mut current = x.to_vec();
    let mut offset = 0;
    for layer in layers {
        let n = layer.parameter_count();
        let pre = layer_pre_activation(layer, &params[offset..offset + n], &current);
        current = pre.into_iter().map(|z| activate(layer.activation(), z)).collect();
        offset += n;
    }
    current[0]
}
