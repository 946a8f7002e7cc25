//! Leave-one-out retraining: the ground truth for removal estimates.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::model::{train, train_with_encoder, ModelArchitecture, TrainedModel, TrainingConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooOutcome {
    pub removed_id: String,
    pub test_id: String,
    /// `θ̂₋z - θ̂`.
    pub delta_params: Vec<f64>,
    pub base_test_loss: f64,
    pub retrained_test_loss: f64,
    /// `loss(θ̂₋z) - loss(θ̂)` at the test instance.
    pub delta_test_loss: f64,
}

/// Trains on the full split and again without `removed_id`, both from the
/// same seed and standardization statistics.
pub fn loo_retrain_oracle(
    ds: &Dataset,
    removed_id: &str,
    test_id: &str,
    arch: &ModelArchitecture,
    cfg: &TrainingConfig,
) -> Result<LooOutcome> {
    let base = train(ds, arch, cfg)?;
    loo_from_model(&base, ds, removed_id, test_id)
}

/// Retrains `base`'s architecture and config without `removed_id`.
pub fn loo_from_model(base: &TrainedModel, ds: &Dataset, removed_id: &str, test_id: &str) -> Result<LooOutcome> {
    let pos = ds
        .position(removed_id)
        .ok_or_else(|| Error::UnknownId(removed_id.to_string()))?;
    if ds.split[pos] != Split::Train {
        return Err(Error::Data(format!("`{removed_id}` is not in the training split")));
    }
    if ds.indices(Split::Train).len() < 2 {
        return Err(Error::Data("leave-one-out needs at least two training instances".into()));
    }
    let test = ds.get(test_id)?;
    let reduced = ds.without(removed_id);
    let retrained = train_with_encoder(&reduced, &base.architecture, &base.training, base.encoder.clone())?;
    let base_test_loss = base.loss(test)?;
    let retrained_test_loss = retrained.loss(test)?;
    Ok(LooOutcome {
        removed_id: removed_id.to_string(),
        test_id: test_id.to_string(),
        delta_params: retrained
            .parameters
            .values
            .iter()
            .zip(&base.parameters.values)
            .map(|(a, b)| a - b)
            .collect(),
        base_test_loss,
        retrained_test_loss,
        delta_test_loss: retrained_test_loss - base_test_loss,
    })
}
