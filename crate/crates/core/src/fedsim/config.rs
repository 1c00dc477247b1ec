use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataio::{self, Dataset, FeatureOptions, MovieLensFormat, SplitRatios};
use crate::error::{Error, Result};
use crate::localmask::{MaskHyperparams, MaskKind};
use crate::mfcore::Hyperparams;
use crate::secagg::FieldParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    /// A directory written by `write_bundle`.
    Bundle,
    Ml100k,
    Ml10m,
    Lastfm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub format: DatasetFormat,
    pub path: PathBuf,
    /// Rating levels for LastFM listening counts.
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub features: FeatureOptions,
}

fn default_bins() -> usize {
    5
}

impl DatasetSpec {
    pub fn load(&self) -> Result<Dataset> {
        match self.format {
            DatasetFormat::Bundle => dataio::read_bundle(&self.path).map(|(d, _)| d),
            DatasetFormat::Ml100k => dataio::load_movielens(&self.path, MovieLensFormat::Ml100k, self.features),
            DatasetFormat::Ml10m => dataio::load_movielens(&self.path, MovieLensFormat::Ml10m, self.features),
            DatasetFormat::Lastfm => dataio::load_lastfm(&self.path, self.bins, self.features),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Algorithm {
    /// Plain federated MF on raw ratings.
    FedMf,
    /// Federated MF on personalized masked ratings.
    FedMmf {
        mask: MaskKind,
        /// Use the all-zero mask (reduces to FedMF; for checks).
        #[serde(default)]
        zero_mask: bool,
    },
    /// Each party's mask model alone.
    LocalOnly { mask: MaskKind },
    /// One context model over user and item features, trained by averaging
    /// every party's full-batch gradient.
    FedContext { mask: MaskKind },
}

fn short(kind: MaskKind) -> &'static str {
    match kind {
        MaskKind::OneOrder => "LR",
        MaskKind::TwoOrder => "FM",
        MaskKind::HighOrder => "NN",
    }
}

impl Algorithm {
    /// Row label in result tables.
    pub fn label(&self) -> String {
        match self {
            Algorithm::FedMf => "FedMF".into(),
            Algorithm::FedMmf { mask, zero_mask: false } => format!("FedMMF-{}", short(*mask)),
            Algorithm::FedMmf { zero_mask: true, .. } => "FedMMF-zero".into(),
            Algorithm::LocalOnly { mask } => format!("Local{}", short(*mask)),
            Algorithm::FedContext { mask } => format!("Fed{}", short(*mask)),
        }
    }
}

/// Removes `party` right after it masked its round-`round` upload; it never
/// returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropoutEvent {
    pub round: usize,
    pub party: usize,
}

/// Records what the server sees of `parties` in rounds `round` and
/// `round + 1`, with the simulator's ground truth alongside for scoring
/// leakage attacks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub round: usize,
    pub parties: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub dataset: DatasetSpec,
    pub algorithm: Algorithm,
    /// `hyperparams.seed` is replaced by each repetition's seed.
    #[serde(default)]
    pub hyperparams: Hyperparams,
    #[serde(default)]
    pub mask: MaskHyperparams,
    /// Privacy-indicator threshold on the `[0, 1]` rating scale; parties
    /// with `J <= th_j` send plaintext gradients.
    #[serde(default = "default_th_j")]
    pub th_j: f64,
    #[serde(default)]
    pub field: FieldParams,
    /// Defaults to `ceil(2/3 * |insecure group|)`.
    #[serde(default)]
    pub shamir_threshold: Option<usize>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// Repetition `r` runs with seed `seed + r`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub split: SplitRatios,
    /// Test metrics every this many rounds, plus the final round.
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// Stop after this many evaluations without a validation improvement.
    #[serde(default)]
    pub early_stopping_patience: Option<usize>,
    #[serde(default)]
    pub dropouts: Vec<DropoutEvent>,
    /// Run party updates on the rayon pool; results are identical either way.
    #[serde(default = "default_true")]
    pub parallel: bool,
    /// Keep every server-received message for auditing.
    #[serde(default)]
    pub transcript: bool,
    #[serde(default)]
    pub observe: Option<Observation>,
}

fn default_name() -> String {
    "experiment".into()
}
fn default_th_j() -> f64 {
    0.05
}
fn default_repetitions() -> usize {
    10
}
fn default_eval_every() -> usize {
    10
}
fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    /// A config with every default filled in.
    pub fn new(dataset: DatasetSpec, algorithm: Algorithm) -> Self {
        Self {
            name: default_name(),
            dataset,
            algorithm,
            hyperparams: Hyperparams::default(),
            mask: MaskHyperparams::default(),
            th_j: default_th_j(),
            field: FieldParams::default(),
            shamir_threshold: None,
            repetitions: default_repetitions(),
            seed: 0,
            split: SplitRatios::default(),
            eval_every: default_eval_every(),
            early_stopping_patience: None,
            dropouts: Vec::new(),
            parallel: true,
            transcript: false,
            observe: None,
        }
    }

    /// Reads TOML, or JSON when the file ends in `.json`.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text)?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidInput(format!("cannot serialize config: {e}")))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        dataio::content_hash(json.as_bytes())
    }

    pub fn repetition_seed(&self, repetition: usize) -> u64 {
        self.seed.wrapping_add(repetition as u64)
    }

    pub fn validate(&self) -> Result<()> {
        self.hyperparams.validate()?;
        self.split.validate()?;
        self.field.validate()?;
        if self.repetitions == 0 {
            return Err(Error::config("repetitions", "must be at least 1"));
        }
        if !(self.th_j.is_finite() && self.th_j >= 0.0) {
            return Err(Error::config("th_j", "must be finite and non-negative"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every", "must be at least 1"));
        }
        if self.early_stopping_patience == Some(0) {
            return Err(Error::config("early_stopping_patience", "must be at least 1 when set"));
        }
        let m = &self.mask;
        if !(m.l2.is_finite() && m.l2 >= 0.0) {
            return Err(Error::config("mask.l2", "must be finite and non-negative"));
        }
        if !(m.learning_rate.is_finite() && m.learning_rate > 0.0) {
            return Err(Error::config("mask.learning_rate", "must be finite and positive"));
        }
        if m.k_fm == 0 {
            return Err(Error::config("mask.k_fm", "must be at least 1"));
        }
        if m.hidden == 0 {
            return Err(Error::config("mask.hidden", "must be at least 1"));
        }
        if self.dataset.bins < 2 {
            return Err(Error::config("dataset.bins", "must be at least 2"));
        }
        if let Some(t) = self.shamir_threshold {
            if t == 0 {
                return Err(Error::config("shamir_threshold", "must be at least 1"));
            }
        }
        for d in &self.dropouts {
            if d.round == 0 || d.round > self.hyperparams.epochs {
                return Err(Error::config(
                    "dropouts",
                    format!("round {} outside 1..={}", d.round, self.hyperparams.epochs),
                ));
            }
        }
        if let Some(o) = &self.observe {
            if o.round == 0 || o.round >= self.hyperparams.epochs {
                return Err(Error::config("observe.round", "needs a following round within the run"));
            }
        }
        Ok(())
    }
}
