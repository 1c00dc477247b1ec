use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::dataio::PartySplit;
use crate::error::{Error, Result};
use crate::localmask::{MaskModel, MaskedRating, PrivacyGroup};
use crate::mfcore::{self, Hyperparams};
use crate::secagg::{encode, FieldParams, MaskedSubmission, PartyMasker, PlainSubmission, SeedBook};

/// Everything one party keeps private.
#[derive(Debug, Clone)]
pub struct PartyState {
    pub user_id: usize,
    pub p: Vec<f64>,
    pub split: PartySplit,
    pub mask_model: Option<MaskModel>,
    /// Masked train ratings; empty when there is no mask model.
    pub masked_ratings: Vec<MaskedRating>,
    pub group: PrivacyGroup,
    pub pair_seeds: SeedBook,
}

impl PartyState {
    /// `(item, target)` pairs the party fits: masked ratings when it has a
    /// mask model, raw train ratings otherwise. Ascending item order.
    pub fn targets(&self) -> Vec<(usize, f64)> {
        if self.mask_model.is_some() {
            self.masked_ratings.iter().map(|m| (m.item_id, m.value)).collect()
        } else {
            self.split.train.iter().map(|t| (t.item_id, t.rating)).collect()
        }
    }

    pub fn rated_items(&self) -> Vec<usize> {
        self.split.train.iter().map(|t| t.item_id).collect()
    }
}

/// Item factors as the server stores them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemFactors {
    pub k: usize,
    pub n_items: usize,
    /// Row-major `n_items x k`.
    pub values: Vec<f64>,
}

impl ItemFactors {
    pub fn row(&self, item: usize) -> &[f64] {
        &self.values[item * self.k..(item + 1) * self.k]
    }

    pub fn row_mut(&mut self, item: usize) -> &mut [f64] {
        &mut self.values[item * self.k..(item + 1) * self.k]
    }
}

/// The server's entire state. It has no field that could hold a rating or a
/// user vector: only item factors, the round counter, the configuration and
/// the current round's aggregated gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerState {
    pub item_factors: ItemFactors,
    pub round: usize,
    pub config: ExperimentConfig,
    pub aggregate: BTreeMap<usize, Vec<f64>>,
}

impl ServerState {
    /// `q_i <- q_i - gamma * sum_u eta_ui` for every aggregated item.
    pub fn apply_aggregate(&mut self, gamma: f64) {
        for (&item, grad) in &self.aggregate {
            for (q, g) in self.item_factors.row_mut(item).iter_mut().zip(grad) {
                *q -= gamma * g;
            }
        }
    }
}

/// One party's upload for a round.
#[derive(Debug, Clone, PartialEq)]
pub enum Upload {
    Plain(PlainSubmission),
    Masked(MaskedSubmission),
}

/// Per-round masking context the server announces.
pub struct MaskingContext<'a> {
    /// Insecure parties contributing to each item's sum.
    pub rosters: &'a BTreeMap<usize, Vec<usize>>,
    pub params: FieldParams,
}

/// One MaskedUpdate step.
///
/// With the downloaded `q_i` the party computes `e = target - q.p`, takes a
/// descent step on `p` over all its items, recomputes the residuals at the
/// new `p` and emits `eta_i = lambda q_i - e_i p`. Secure-group parties send
/// the gradients as they are; insecure-group parties encode them and add
/// their pairwise masks.
pub fn masked_update(
    party: &mut PartyState,
    items: &ItemFactors,
    round: usize,
    hp: &Hyperparams,
    ctx: &MaskingContext,
) -> Result<Upload> {
    let gradients = local_step(party, items, hp);
    route_upload(party, gradients, round, ctx)
}

/// Sends gradients as they are (secure group) or encoded and masked
/// (insecure group).
pub(crate) fn route_upload(
    party: &PartyState,
    gradients: BTreeMap<usize, Vec<f64>>,
    round: usize,
    ctx: &MaskingContext,
) -> Result<Upload> {
    match party.group {
        PrivacyGroup::Secure => Ok(Upload::Plain(PlainSubmission {
            party: party.user_id,
            gradients,
        })),
        PrivacyGroup::Insecure => {
            let mut masker = PartyMasker::new(party.user_id, &party.pair_seeds, round as u64, ctx.params);
            let mut shares = BTreeMap::new();
            for (item, grad) in gradients {
                let roster = ctx
                    .rosters
                    .get(&item)
                    .ok_or_else(|| Error::Protocol(format!("no roster announced for item {item}")))?;
                let encoded = encode(&grad, &ctx.params)?;
                shares.insert(item, masker.mask(&encoded, roster, item as u64)?);
            }
            Ok(Upload::Masked(MaskedSubmission {
                party: party.user_id,
                shares,
            }))
        }
    }
}

/// Updates `p` and returns the plaintext item gradients.
pub(crate) fn local_step(party: &mut PartyState, items: &ItemFactors, hp: &Hyperparams) -> BTreeMap<usize, Vec<f64>> {
    let targets = party.targets();
    let rated: Vec<(&[f64], f64)> = targets
        .iter()
        .map(|&(i, r)| {
            let q = items.row(i);
            (q, r - mfcore::dot(q, &party.p))
        })
        .collect();
    party.p = mfcore::update_user(&party.p, &rated, hp.gamma, hp.lambda);
    targets
        .iter()
        .map(|&(i, r)| {
            let q = items.row(i);
            let e = r - mfcore::dot(q, &party.p);
            (i, mfcore::item_gradient(q, &party.p, e, hp.lambda))
        })
        .collect()
}
