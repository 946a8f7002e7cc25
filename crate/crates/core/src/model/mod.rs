//! Differentiable model zoo, training, prediction and model comparison.

mod arch;
mod encoder;
mod metrics;
pub(crate) mod network;
mod trained;

pub use arch::{Activation, HiddenLayer, Layer, ModelArchitecture, DEFAULT_PARAMETER_LIMIT};
pub use encoder::{EncodedFeature, InputEncoder, MAD_FLOOR};
pub use metrics::{
    auc_roc, compare_models, compare_trained, evaluate, shuffle_train_labels, CompareOptions, Confusion, RandomLabelControl, Interpretability,
    MetricsReport, ModelMetrics, TradeOff,
};
pub(crate) use trained::{objective, EncodedSet};
pub use trained::{
    train, train_with_encoder, Optimizer, ParameterBlock, ParameterVector, TrainedModel, TrainingConfig,
    TrainingLog, MODEL_FORMAT_VERSION,
};
