//! Rating datasets, side-information features and per-party splits.

mod bundle;
mod lastfm;
mod movielens;
mod pca;
mod split;
mod tfidf;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bundle::{content_hash, read_bundle, write_bundle, BundleManifest, BUNDLE_VERSION};
pub use lastfm::{load_lastfm, parse_lastfm, quantile_bins};
pub use movielens::{load_movielens, parse_movielens, MovieLensFormat};
pub use pca::{pca, Pca};
pub use split::{split_party, SplitRatios};
pub use tfidf::tfidf;

/// One observed rating, with dense 0-based ids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingTriple {
    pub user_id: usize,
    pub item_id: usize,
    pub rating: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub entity_id: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingScale {
    pub min: f64,
    pub max: f64,
    /// Distance between adjacent rating levels (1 for 1..5 stars, 0.5 for half stars).
    pub step: f64,
}

impl RatingScale {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        if !(min < max) || !(step > 0.0) {
            return Err(Error::InvalidInput(format!(
                "rating scale needs min < max and step > 0, got [{min}, {max}] step {step}"
            )));
        }
        Ok(Self { min, max, step })
    }

    pub fn contains(&self, r: f64) -> bool {
        r >= self.min - 1e-9 && r <= self.max + 1e-9
    }

    /// Affine map onto `[0, 1]`.
    pub fn rescale(&self, r: f64) -> f64 {
        (r - self.min) / (self.max - self.min)
    }

    pub fn clip(&self, r: f64) -> f64 {
        r.clamp(self.min, self.max)
    }
}

/// Ratings plus side information, all ids dense.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    /// Sorted by `(user_id, item_id)`.
    pub ratings: Vec<RatingTriple>,
    pub user_features: Vec<FeatureVector>,
    pub item_features: Vec<FeatureVector>,
    pub n_users: usize,
    pub n_items: usize,
    pub scale: RatingScale,
    /// Original id of each dense user id.
    pub user_ids: Vec<u64>,
    /// Original id of each dense item id.
    pub item_ids: Vec<u64>,
}

impl Dataset {
    /// Builds a dataset from ratings keyed by original ids. Dense ids follow
    /// ascending original id. Every entity gets a zero-dimensional feature
    /// vector until features are attached.
    pub fn from_raw(name: &str, raw: Vec<(u64, u64, f64)>, scale: RatingScale) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Empty(format!("{name} ratings")));
        }
        let mut user_index: BTreeMap<u64, usize> = BTreeMap::new();
        let mut item_index: BTreeMap<u64, usize> = BTreeMap::new();
        for &(u, i, _) in &raw {
            user_index.insert(u, 0);
            item_index.insert(i, 0);
        }
        for (dense, slot) in user_index.values_mut().enumerate() {
            *slot = dense;
        }
        for (dense, slot) in item_index.values_mut().enumerate() {
            *slot = dense;
        }
        let mut ratings: Vec<RatingTriple> = raw
            .iter()
            .map(|&(u, i, r)| RatingTriple {
                user_id: user_index[&u],
                item_id: item_index[&i],
                rating: r,
            })
            .collect();
        ratings.sort_by_key(|t| (t.user_id, t.item_id));
        let user_ids: Vec<u64> = user_index.keys().copied().collect();
        let item_ids: Vec<u64> = item_index.keys().copied().collect();
        for w in ratings.windows(2) {
            if w[0].user_id == w[1].user_id && w[0].item_id == w[1].item_id {
                return Err(Error::DuplicateRating {
                    user: user_ids[w[0].user_id].to_string(),
                    item: item_ids[w[0].item_id].to_string(),
                });
            }
        }
        let n_users = user_ids.len();
        let n_items = item_ids.len();
        Ok(Self {
            name: name.to_string(),
            ratings,
            user_features: empty_features(n_users),
            item_features: empty_features(n_items),
            n_users,
            n_items,
            scale,
            user_ids,
            item_ids,
        })
    }

    pub fn user_feature_dim(&self) -> usize {
        self.user_features.first().map_or(0, |f| f.values.len())
    }

    pub fn item_feature_dim(&self) -> usize {
        self.item_features.first().map_or(0, |f| f.values.len())
    }

    /// Replaces the user features; entities missing from `features` get zeros.
    pub fn set_user_features(&mut self, features: &BTreeMap<usize, Vec<f64>>, dim: usize) {
        self.user_features = dense_features(self.n_users, features, dim);
    }

    pub fn set_item_features(&mut self, features: &BTreeMap<usize, Vec<f64>>, dim: usize) {
        self.item_features = dense_features(self.n_items, features, dim);
    }

    /// Ratings grouped per user, each group in ascending item order.
    pub fn ratings_by_user(&self) -> Vec<Vec<RatingTriple>> {
        let mut out = vec![Vec::new(); self.n_users];
        for t in &self.ratings {
            out[t.user_id].push(*t);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.min < self.scale.max) {
            return Err(Error::InvalidInput("rating_min must be below rating_max".into()));
        }
        if self.user_features.len() != self.n_users || self.item_features.len() != self.n_items {
            return Err(Error::InvalidInput("every user and item needs a feature vector".into()));
        }
        let du = self.user_feature_dim();
        let di = self.item_feature_dim();
        let finite_and_sized = |fs: &[FeatureVector], d: usize| {
            fs.iter()
                .enumerate()
                .all(|(n, f)| f.entity_id == n && f.values.len() == d && f.values.iter().all(|v| v.is_finite()))
        };
        if !finite_and_sized(&self.user_features, du) || !finite_and_sized(&self.item_features, di) {
            return Err(Error::InvalidInput(
                "feature vectors must share one dimension per entity class and be finite".into(),
            ));
        }
        for w in self.ratings.windows(2) {
            if (w[0].user_id, w[0].item_id) >= (w[1].user_id, w[1].item_id) {
                return Err(Error::InvalidInput("ratings must be sorted and unique".into()));
            }
        }
        for t in &self.ratings {
            if t.user_id >= self.n_users || t.item_id >= self.n_items {
                return Err(Error::InvalidInput(format!(
                    "rating ({}, {}) out of id range",
                    t.user_id, t.item_id
                )));
            }
            if !self.scale.contains(t.rating) {
                return Err(Error::InvalidInput(format!(
                    "rating {} outside [{}, {}]",
                    t.rating, self.scale.min, self.scale.max
                )));
            }
        }
        Ok(())
    }
}

fn empty_features(n: usize) -> Vec<FeatureVector> {
    (0..n)
        .map(|entity_id| FeatureVector {
            entity_id,
            values: Vec::new(),
        })
        .collect()
}

fn dense_features(n: usize, features: &BTreeMap<usize, Vec<f64>>, dim: usize) -> Vec<FeatureVector> {
    (0..n)
        .map(|entity_id| FeatureVector {
            entity_id,
            values: features.get(&entity_id).cloned().unwrap_or_else(|| vec![0.0; dim]),
        })
        .collect()
}

/// Ratings of one user split into disjoint train / validation / test parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartySplit {
    pub user_id: usize,
    pub train: Vec<RatingTriple>,
    pub validation: Vec<RatingTriple>,
    pub test: Vec<RatingTriple>,
}

/// Options for turning tag occurrences into dense side features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureOptions {
    pub pca_dim: usize,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        Self { pca_dim: 25 }
    }
}

/// TF-IDF over the tag corpus followed by PCA to `opts.pca_dim` columns.
/// Entities that never appear in `tags` are not part of the corpus and end up
/// with zero vectors.
pub(crate) fn tag_features(
    tags: &BTreeMap<usize, Vec<usize>>,
    vocabulary_size: usize,
    opts: FeatureOptions,
) -> Result<BTreeMap<usize, Vec<f64>>> {
    if tags.is_empty() || vocabulary_size == 0 || opts.pca_dim == 0 {
        return Ok(BTreeMap::new());
    }
    let weighted = tfidf(tags, vocabulary_size)?;
    let ids: Vec<usize> = weighted.keys().copied().collect();
    let rows: Vec<Vec<f64>> = weighted.into_values().map(|f| f.values).collect();
    let projected = pca(&rows, opts.pca_dim)?;
    Ok(ids.into_iter().zip(projected.rows).collect())
}
