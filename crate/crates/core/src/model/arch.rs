use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default ceiling on parameters so dense Hessians stay tractable.
pub const DEFAULT_PARAMETER_LIMIT: usize = 5_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenLayer {
    pub width: usize,
    pub activation: Activation,
}

/// Model descriptor. Every architecture ends in a single logit and the
/// probability is its logistic transform.
///
/// `Conv1d` convolves a single-channel signal along the encoded feature
/// axis of one observation window (`window` rows, flattened), followed by
/// one dense output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelArchitecture {
    Logreg {
        input_width: usize,
    },
    Mlp {
        input_width: usize,
        hidden: Vec<HiddenLayer>,
    },
    Conv1d {
        input_width: usize,
        window: usize,
        channels: usize,
        kernel_size: usize,
        activation: Activation,
    },
}

impl ModelArchitecture {
    pub fn logreg(input_width: usize) -> Self {
        ModelArchitecture::Logreg { input_width }
    }

    /// One hidden layer of 16 relu units.
    pub fn default_mlp(input_width: usize) -> Self {
        Self::mlp(input_width, &[16], Activation::Relu)
    }

    pub fn mlp(input_width: usize, widths: &[usize], activation: Activation) -> Self {
        ModelArchitecture::Mlp {
            input_width,
            hidden: widths
                .iter()
                .map(|&width| HiddenLayer { width, activation })
                .collect(),
        }
    }

    /// 8 relu channels, kernel 2, one observation window.
    pub fn default_conv1d(input_width: usize) -> Self {
        ModelArchitecture::Conv1d {
            input_width,
            window: 1,
            channels: 8,
            kernel_size: 2,
            activation: Activation::Relu,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelArchitecture::Logreg { .. } => "logreg",
            ModelArchitecture::Mlp { .. } => "mlp",
            ModelArchitecture::Conv1d { .. } => "conv1d",
        }
    }

    pub fn input_width(&self) -> usize {
        match self {
            ModelArchitecture::Logreg { input_width }
            | ModelArchitecture::Mlp { input_width, .. }
            | ModelArchitecture::Conv1d { input_width, .. } => *input_width,
        }
    }

    /// Logistic regression is read directly from its weights; the others
    /// need post-hoc explanation.
    pub fn is_intrinsically_interpretable(&self) -> bool {
        matches!(self, ModelArchitecture::Logreg { .. })
    }

    pub fn layers(&self) -> Vec<Layer> {
        match self {
            ModelArchitecture::Logreg { input_width } => vec![Layer::Dense {
                input: *input_width,
                output: 1,
                activation: None,
            }],
            ModelArchitecture::Mlp { input_width, hidden } => {
                let mut layers = Vec::with_capacity(hidden.len() + 1);
                let mut prev = *input_width;
                for h in hidden {
                    layers.push(Layer::Dense {
                        input: prev,
                        output: h.width,
                        activation: Some(h.activation),
                    });
                    prev = h.width;
                }
                layers.push(Layer::Dense {
                    input: prev,
                    output: 1,
                    activation: None,
                });
                layers
            }
            ModelArchitecture::Conv1d {
                input_width,
                window,
                channels,
                kernel_size,
                activation,
            } => {
                let length = input_width * window;
                let conv = Layer::Conv1d {
                    length,
                    channels: *channels,
                    kernel: *kernel_size,
                    activation: Some(*activation),
                };
                let dense = Layer::Dense {
                    input: conv.output_width(),
                    output: 1,
                    activation: None,
                };
                vec![conv, dense]
            }
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().iter().map(Layer::parameter_count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_width() == 0 {
            return Err(Error::Config("architecture input width is 0".into()));
        }
        match self {
            ModelArchitecture::Mlp { hidden, .. } if hidden.iter().any(|h| h.width == 0) => {
                return Err(Error::Config("hidden layer of width 0".into()))
            }
            ModelArchitecture::Conv1d {
                input_width,
                window,
                channels,
                kernel_size,
                ..
            } => {
                if *window != 1 {
                    return Err(Error::Config(
                        "conv1d supports one observation window per instance (window = 1)".into(),
                    ));
                }
                if *channels == 0 || *kernel_size == 0 || *kernel_size > input_width * window {
                    return Err(Error::Config(format!(
                        "conv1d needs channels >= 1 and 1 <= kernel <= {}",
                        input_width * window
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// One differentiable layer; parameters are laid out weights first, then
/// biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    /// `out[o] = act(sum_i W[o][i] in[i] + b[o])`, `W` row-major.
    Dense {
        input: usize,
        output: usize,
        activation: Option<Activation>,
    },
    /// Single input channel; `out[c * positions + p] =
    /// act(sum_k K[c][k] in[p + k] + b[c])` with `positions = length - kernel + 1`.
    Conv1d {
        length: usize,
        channels: usize,
        kernel: usize,
        activation: Option<Activation>,
    },
}

impl Layer {
    pub fn parameter_count(&self) -> usize {
        match *self {
            Layer::Dense { input, output, .. } => input * output + output,
            Layer::Conv1d { channels, kernel, .. } => channels * kernel + channels,
        }
    }

    pub fn input_width(&self) -> usize {
        match *self {
            Layer::Dense { input, .. } => input,
            Layer::Conv1d { length, .. } => length,
        }
    }

    pub fn output_width(&self) -> usize {
        match *self {
            Layer::Dense { output, .. } => output,
            Layer::Conv1d {
                length,
                channels,
                kernel,
                ..
            } => channels * (length - kernel + 1),
        }
    }

    pub fn fan_in(&self) -> usize {
        match *self {
            Layer::Dense { input, .. } => input,
            Layer::Conv1d { kernel, .. } => kernel,
        }
    }

    pub fn activation(&self) -> Option<Activation> {
        match *self {
            Layer::Dense { activation, .. } | Layer::Conv1d { activation, .. } => activation,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_counts() {
        assert_eq!(ModelArchitecture::logreg(10).parameter_count(), 11);
        assert_eq!(ModelArchitecture::default_mlp(39).parameter_count(), 39 * 16 + 16 + 17);
        // 8 * 2 + 8 kernel params, then dense over 8 * 38 positions + bias.
        assert_eq!(ModelArchitecture::default_conv1d(39).parameter_count(), 24 + 8 * 38 + 1);
        for arch in [
            ModelArchitecture::logreg(39),
            ModelArchitecture::default_mlp(39),
            ModelArchitecture::default_conv1d(39),
        ] {
            assert!(arch.parameter_count() <= DEFAULT_PARAMETER_LIMIT);
        }
    }

    #[test]
    fn interpretability_flags() {
        assert!(ModelArchitecture::logreg(3).is_intrinsically_interpretable());
        assert!(!ModelArchitecture::default_mlp(3).is_intrinsically_interpretable());
        assert!(!ModelArchitecture::default_conv1d(3).is_intrinsically_interpretable());
    }

    #[test]
    fn conv_kernel_guard() {
        let mut arch = ModelArchitecture::default_conv1d(1);
        assert!(arch.validate().is_err());
        arch = ModelArchitecture::default_conv1d(2);
        assert!(arch.validate().is_ok());
    }
}
