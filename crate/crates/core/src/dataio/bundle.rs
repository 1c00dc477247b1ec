//! Canonical on-disk dataset bundle.
//!
//! ```text
//! <dir>/ratings.csv         user,item,rating,split
//! <dir>/user_features.csv   id,f0,f1,...
//! <dir>/item_features.csv   id,f0,f1,...
//! <dir>/manifest.json       scale bounds, id maps, seed, split ratios, content hash
//! ```
//!
//! Floats are written in shortest round-trip form, so reading a bundle back
//! reproduces the dataset bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{split_party, Dataset, FeatureVector, RatingScale, RatingTriple, SplitRatios};
use crate::error::{Error, Result};

pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub version: u32,
    pub name: String,
    pub n_users: usize,
    pub n_items: usize,
    pub n_ratings: usize,
    pub rating_min: f64,
    pub rating_max: f64,
    pub rating_step: f64,
    pub user_feature_dim: usize,
    pub item_feature_dim: usize,
    pub seed: u64,
    pub split: SplitRatios,
    /// Git-style (`blob <len>\0` prefixed) SHA-256 of the dataset content.
    pub dataset_hash: String,
    pub user_ids: Vec<u64>,
    pub item_ids: Vec<u64>,
}

/// `sha256("blob <len>\0" || bytes)`, hex encoded.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("blob {}\0", bytes.len()).as_bytes());
    hasher.update(bytes);
    hasher.finalize().iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn features_csv(features: &[FeatureVector]) -> String {
    let dim = features.first().map_or(0, |f| f.values.len());
    let mut out = String::from("id");
    for j in 0..dim {
        let _ = write!(out, ",f{j}");
    }
    out.push('\n');
    for f in features {
        let _ = write!(out, "{}", f.entity_id);
        for v in &f.values {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

impl Dataset {
    /// Hash over ratings, both feature tables and the rating scale.
    pub fn content_hash(&self) -> String {
        let mut text = format!(
            "{}\n{},{},{}\n",
            self.name, self.scale.min, self.scale.max, self.scale.step
        );
        for t in &self.ratings {
            let _ = writeln!(text, "{},{},{}", t.user_id, t.item_id, t.rating);
        }
        text.push_str(&features_csv(&self.user_features));
        text.push_str(&features_csv(&self.item_features));
        content_hash(text.as_bytes())
    }
}

pub fn write_bundle(dir: &Path, dataset: &Dataset, seed: u64, split: SplitRatios) -> Result<BundleManifest> {
    dataset.validate()?;
    fs::create_dir_all(dir)?;
    let mut ratings = String::from("user,item,rating,split\n");
    for user_ratings in dataset.ratings_by_user() {
        if user_ratings.is_empty() {
            continue;
        }
        let parts = split_party(&user_ratings, split, seed);
        let mut rows: Vec<(RatingTriple, &str)> = parts
            .train
            .iter()
            .map(|t| (*t, "train"))
            .chain(parts.validation.iter().map(|t| (*t, "validation")))
            .chain(parts.test.iter().map(|t| (*t, "test")))
            .collect();
        rows.sort_by_key(|(t, _)| t.item_id);
        for (t, part) in rows {
            let _ = writeln!(ratings, "{},{},{},{part}", t.user_id, t.item_id, t.rating);
        }
    }
    fs::write(dir.join("ratings.csv"), ratings)?;
    fs::write(dir.join("user_features.csv"), features_csv(&dataset.user_features))?;
    fs::write(dir.join("item_features.csv"), features_csv(&dataset.item_features))?;
    let manifest = BundleManifest {
        version: BUNDLE_VERSION,
        name: dataset.name.clone(),
        n_users: dataset.n_users,
        n_items: dataset.n_items,
        n_ratings: dataset.ratings.len(),
        rating_min: dataset.scale.min,
        rating_max: dataset.scale.max,
        rating_step: dataset.scale.step,
        user_feature_dim: dataset.user_feature_dim(),
        item_feature_dim: dataset.item_feature_dim(),
        seed,
        split,
        dataset_hash: dataset.content_hash(),
        user_ids: dataset.user_ids.clone(),
        item_ids: dataset.item_ids.clone(),
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(dir.join("manifest.json"), json)?;
    Ok(manifest)
}

fn read_features(path: &Path, n: usize, dim: usize) -> Result<Vec<FeatureVector>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::with_capacity(n);
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let bad = |message: &str| Error::Parse {
            path: path.to_path_buf(),
            line: row + 2,
            message: message.into(),
        };
        if record.len() != dim + 1 {
            return Err(bad("wrong number of feature columns"));
        }
        let entity_id: usize = record[0].parse().map_err(|_| bad("bad id"))?;
        if entity_id != out.len() {
            return Err(bad("feature rows must be dense and ordered"));
        }
        let values = record
            .iter()
            .skip(1)
            .map(|c| c.parse::<f64>().map_err(|_| bad("bad float")))
            .collect::<Result<Vec<_>>>()?;
        out.push(FeatureVector { entity_id, values });
    }
    if out.len() != n {
        return Err(Error::InvalidInput(format!(
            "{} has {} rows, manifest says {n}",
            path.display(),
            out.len()
        )));
    }
    Ok(out)
}

/// Reads a bundle back. Returns the dataset and the manifest; the stored
/// content hash is checked against the reloaded data.
pub fn read_bundle(dir: &Path) -> Result<(Dataset, BundleManifest)> {
    let manifest_path = dir.join("manifest.json");
    if !manifest_path.is_file() {
        return Err(Error::MissingFiles(format!(
            "{} (expected bundle layout: manifest.json, ratings.csv, user_features.csv, item_features.csv)",
            manifest_path.display()
        )));
    }
    let manifest: BundleManifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    if manifest.version != BUNDLE_VERSION {
        return Err(Error::InvalidInput(format!(
            "unsupported bundle version {}",
            manifest.version
        )));
    }
    let ratings_path = dir.join("ratings.csv");
    let mut reader = csv::Reader::from_path(&ratings_path)?;
    let mut ratings = Vec::with_capacity(manifest.n_ratings);
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let bad = || Error::Parse {
            path: ratings_path.clone(),
            line: row + 2,
            message: "expected user,item,rating,split".into(),
        };
        if record.len() != 4 {
            return Err(bad());
        }
        ratings.push(RatingTriple {
            user_id: record[0].parse().map_err(|_| bad())?,
            item_id: record[1].parse().map_err(|_| bad())?,
            rating: record[2].parse().map_err(|_| bad())?,
        });
    }
    ratings.sort_by_key(|t| (t.user_id, t.item_id));
    let dataset = Dataset {
        name: manifest.name.clone(),
        ratings,
        user_features: read_features(
            &dir.join("user_features.csv"),
            manifest.n_users,
            manifest.user_feature_dim,
        )?,
        item_features: read_features(
            &dir.join("item_features.csv"),
            manifest.n_items,
            manifest.item_feature_dim,
        )?,
        n_users: manifest.n_users,
        n_items: manifest.n_items,
        scale: RatingScale::new(manifest.rating_min, manifest.rating_max, manifest.rating_step)?,
        user_ids: manifest.user_ids.clone(),
        item_ids: manifest.item_ids.clone(),
    };
    dataset.validate()?;
    let hash = dataset.content_hash();
    if hash != manifest.dataset_hash {
        return Err(Error::InvalidInput(format!(
            "bundle content hash {hash} does not match manifest {}",
            manifest.dataset_hash
        )));
    }
    Ok((dataset, manifest))
}
