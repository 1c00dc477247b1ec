//! Personalized masks: per-party private models, masked ratings, the
//! privacy indicator and its sample-complexity bound.

mod model;
mod privacy;

use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, RatingTriple};
use crate::mfcore;

pub use model::{
    train_mask_model, FeatureSpec, MaskHyperparams, MaskKind, MaskModel, MaskModelFile, MaskWeights, ModelShape,
    MASK_MODEL_VERSION,
};
pub use privacy::{
    assign_group, estimate_privacy_indicator, sample_complexity_bound, theorem1_monte_carlo, MonteCarloOutcome,
    PrivacyGroup, PrivacyReport,
};

/// `r_ui - f_u^mask(i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskedRating {
    pub user_id: usize,
    pub item_id: usize,
    pub value: f64,
}

/// Masks every triple in `ratings` with the party's model.
pub fn mask_ratings(ratings: &[RatingTriple], model: &MaskModel, dataset: &Dataset) -> Vec<MaskedRating> {
    ratings
        .iter()
        .map(|t| MaskedRating {
            user_id: t.user_id,
            item_id: t.item_id,
            value: t.rating - model.predict(dataset, t.item_id),
        })
        .collect()
}

/// `q_i.p_u + f_u^mask(i)`, clipped to the rating scale.
///
/// `q_i` is `None` for an item the federation never trained; the mask model
/// then answers alone, or the party's train mean when there are no features.
pub fn predict_fedmmf(p_u: &[f64], q_i: Option<&[f64]>, model: &MaskModel, dataset: &Dataset, item: usize) -> f64 {
    let has_features = model.feature_spec.input_dim() > 0;
    let raw = match q_i {
        Some(q) => mfcore::dot(q, p_u) + model.predict(dataset, item),
        None if has_features => model.predict(dataset, item),
        None => model.train_mean,
    };
    dataset.scale.clip(raw)
}

#[cfg(test)]
mod tests;
