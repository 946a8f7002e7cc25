//! Explainability evidence for the safety assurance of small tabular
//! clinical classifiers.
//!
//! The crate follows an ML development life-cycle end to end on a synthetic
//! ventilation-weaning cohort:
//!
//! - [`data`]: feature schema, synthetic cohort, CSV I/O and the five
//!   data-quality checks (conformance, completeness, accuracy, relevance,
//!   balance).
//! - [`model`]: logistic regression, MLP and 1-D convolution models with
//!   deterministic training, AUC-ROC and model comparison.
//! - [`grad`]: reverse-mode gradients, Hessian-vector products, exact
//!   Hessians and finite-difference oracles.
//! - [`influence`]: influence functions, inverse-HVP solves and the
//!   leave-one-out retraining oracle.
//! - [`attribution`]: Gradient*Input, Integrated Gradients, DeepLIFT
//!   (Rescale) and exact Shapley values.
//! - [`counterfactual`]: diverse counterfactuals, a grid oracle, single
//!   point of failure checks and robustness scores.
//! - [`safetycase`]: GSN argument graphs, evidence binding, validation and
//!   status propagation.
//! - [`pipeline`]: the command pipeline used by the `xai-assure` binary.

pub mod attribution;
pub mod counterfactual;
pub mod data;
pub mod error;
pub mod grad;
pub mod influence;
pub mod model;
pub mod pipeline;
pub mod safetycase;
pub mod util;

pub use error::{Error, Result};
