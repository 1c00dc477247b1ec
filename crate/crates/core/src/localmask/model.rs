//! Private per-party models whose predictions become personalized masks.
//!
//! Parameters live in one flat vector so that gradients, finite-difference
//! checks and federated averaging all work on the same representation:
//!
//! | kind      | layout                                              |
//! |-----------|-----------------------------------------------------|
//! | OneOrder  | `[bias, w_0 .. w_{d-1}]`                            |
//! | TwoOrder  | `[bias, w (d), V (d x k_fm, row-major)]`            |
//! | HighOrder | `[W1 (h x d, row-major), b1 (h), w2 (h), b2]`       |

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, RatingTriple};
use crate::error::{Error, Result};
use crate::mfcore::dot;
use crate::rng;

pub const MASK_MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    /// Linear regression.
    OneOrder,
    /// Factorization machine.
    TwoOrder,
    /// One-hidden-layer tanh network.
    HighOrder,
}

impl MaskKind {
    pub fn label(self) -> &'static str {
        match self {
            MaskKind::OneOrder => "one_order",
            MaskKind::TwoOrder => "two_order",
            MaskKind::HighOrder => "high_order",
        }
    }
}

/// Which side-feature blocks form the model input, in order `[user, item]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub use_user: bool,
    pub use_item: bool,
    pub user_dim: usize,
    pub item_dim: usize,
}

impl FeatureSpec {
    /// Item features only: the per-party default, since a party's own user
    /// features are constant across its ratings.
    pub fn item_only(dataset: &Dataset) -> Self {
        Self {
            use_user: false,
            use_item: true,
            user_dim: dataset.user_feature_dim(),
            item_dim: dataset.item_feature_dim(),
        }
    }

    pub fn user_and_item(dataset: &Dataset) -> Self {
        Self {
            use_user: true,
            use_item: true,
            user_dim: dataset.user_feature_dim(),
            item_dim: dataset.item_feature_dim(),
        }
    }

    pub fn input_dim(&self) -> usize {
        (self.use_user as usize) * self.user_dim + (self.use_item as usize) * self.item_dim
    }

    pub fn input(&self, dataset: &Dataset, user: usize, item: usize) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.input_dim());
        if self.use_user {
            x.extend_from_slice(&dataset.user_features[user].values);
        }
        if self.use_item {
            x.extend_from_slice(&dataset.item_features[item].values);
        }
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskHyperparams {
    /// L2 penalty on every non-bias weight.
    pub l2: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub k_fm: usize,
    pub hidden: usize,
    /// Standard deviation scale of the random FM factor init.
    pub init_scale: f64,
}

impl Default for MaskHyperparams {
    fn default() -> Self {
        Self {
            l2: 0.01,
            learning_rate: 0.05,
            epochs: 200,
            k_fm: 8,
            hidden: 32,
            init_scale: 0.01,
        }
    }
}

/// Shape metadata needed to interpret the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub kind: MaskKind,
    pub input_dim: usize,
    pub k_fm: usize,
    pub hidden: usize,
}

impl ModelShape {
    pub fn n_params(&self) -> usize {
        let d = self.input_dim;
        match self.kind {
            MaskKind::OneOrder => 1 + d,
            MaskKind::TwoOrder => 1 + d + d * self.k_fm,
            MaskKind::HighOrder => self.hidden * d + 2 * self.hidden + 1,
        }
    }

    /// Whether parameter `idx` is a bias (excluded from the L2 penalty).
    fn is_bias(&self, idx: usize) -> bool {
        let d = self.input_dim;
        match self.kind {
            MaskKind::OneOrder | MaskKind::TwoOrder => idx == 0,
            MaskKind::HighOrder => {
                let h = self.hidden;
                (h * d..h * d + h).contains(&idx) || idx == h * d + 2 * h
            }
        }
    }

    /// Prediction for input `x`, accumulating `scale * d f / d params` into
    /// `grad` when given.
    pub fn forward(&self, params: &[f64], x: &[f64], grad: Option<(&mut [f64], f64)>) -> f64 {
        let d = self.input_dim;
        debug_assert_eq!(x.len(), d);
        debug_assert_eq!(params.len(), self.n_params());
        match self.kind {
            MaskKind::OneOrder => {
                let y = params[0] + dot(&params[1..=d], x);
                if let Some((g, s)) = grad {
                    g[0] += s;
                    for (gj, xj) in g[1..=d].iter_mut().zip(x) {
                        *gj += s * xj;
                    }
                }
                y
            }
            MaskKind::TwoOrder => {
                let k = self.k_fm;
                let w = &params[1..=d];
                let v = &params[1 + d..];
                let mut sums = vec![0.0; k];
                let mut sq = 0.0;
                for (j, xj) in x.iter().enumerate() {
                    if *xj == 0.0 {
                        continue;
                    }
                    for (f, sf) in sums.iter_mut().enumerate() {
                        let vjf = v[j * k + f];
                        *sf += vjf * xj;
                        sq += vjf * vjf * xj * xj;
                    }
                }
                let pair = 0.5 * (sums.iter().map(|s| s * s).sum::<f64>() - sq);
                let y = params[0] + dot(w, x) + pair;
                if let Some((g, s)) = grad {
                    g[0] += s;
                    for (gj, xj) in g[1..=d].iter_mut().zip(x) {
                        *gj += s * xj;
                    }
                    let gv = &mut g[1 + d..];
                    for (j, xj) in x.iter().enumerate() {
                        if *xj == 0.0 {
                            continue;
                        }
                        for f in 0..k {
                            gv[j * k + f] += s * (xj * sums[f] - v[j * k + f] * xj * xj);
                        }
                    }
                }
                y
            }
            MaskKind::HighOrder => {
                let h = self.hidden;
                let (w1, rest) = params.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(h);
                let act: Vec<f64> = (0..h)
                    .map(|n| (dot(&w1[n * d..(n + 1) * d], x) + b1[n]).tanh())
                    .collect();
                let y = dot(w2, &act) + b2[0];
                if let Some((g, s)) = grad {
                    let (gw1, grest) = g.split_at_mut(h * d);
                    let (gb1, grest) = grest.split_at_mut(h);
                    let (gw2, gb2) = grest.split_at_mut(h);
                    gb2[0] += s;
                    for n in 0..h {
                        gw2[n] += s * act[n];
                        let back = s * w2[n] * (1.0 - act[n] * act[n]);
                        gb1[n] += back;
                        for (gw, xj) in gw1[n * d..(n + 1) * d].iter_mut().zip(x) {
                            *gw += back * xj;
                        }
                    }
                }
                y
            }
        }
    }

    /// Mean squared error plus `l2 * |non-bias weights|^2`, with its gradient.
    pub fn loss_and_gradient(&self, params: &[f64], examples: &[(Vec<f64>, f64)], l2: f64) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; params.len()];
        let n = examples.len().max(1) as f64;
        let mut loss = 0.0;
        for (x, r) in examples {
            // residual of the current prediction; gradient pass afterwards
            let y = self.forward(params, x, None);
            let e = y - r;
            loss += e * e / n;
            self.forward(params, x, Some((&mut grad, 2.0 * e / n)));
        }
        for (idx, (g, p)) in grad.iter_mut().zip(params).enumerate() {
            if !self.is_bias(idx) {
                *g += 2.0 * l2 * p;
                loss += l2 * p * p;
            }
        }
        (loss, grad)
    }

    pub fn init_params<R: Rng>(&self, mean_rating: f64, hp: &MaskHyperparams, rng: &mut R) -> Vec<f64> {
        let d = self.input_dim;
        let mut params = vec![0.0; self.n_params()];
        match self.kind {
            MaskKind::OneOrder => params[0] = mean_rating,
            MaskKind::TwoOrder => {
                params[0] = mean_rating;
                for v in params[1 + d..].iter_mut() {
                    *v = hp.init_scale * rng.gen_range(-1.0..1.0);
                }
            }
            MaskKind::HighOrder => {
                let h = self.hidden;
                let in_bound = 1.0 / (d.max(1) as f64).sqrt();
                let out_bound = 1.0 / (h.max(1) as f64).sqrt();
                for w in params[..h * d].iter_mut() {
                    *w = rng.gen_range(-in_bound..in_bound);
                }
                for w in params[h * d + h..h * d + 2 * h].iter_mut() {
                    *w = rng.gen_range(-out_bound..out_bound);
                }
                params[h * d + 2 * h] = mean_rating;
            }
        }
        params
    }
}

/// A trained private model together with what it needs to predict.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskModel {
    pub user_id: usize,
    pub shape: ModelShape,
    pub feature_spec: FeatureSpec,
    pub params: Vec<f64>,
    /// Mean of the ratings the model was trained on.
    pub train_mean: f64,
}

impl MaskModel {
    pub fn kind(&self) -> MaskKind {
        self.shape.kind
    }

    /// A model that predicts 0 everywhere; masking with it is the identity.
    pub fn zero(
        user_id: usize,
        kind: MaskKind,
        feature_spec: FeatureSpec,
        hp: &MaskHyperparams,
        train_mean: f64,
    ) -> Self {
        let shape = ModelShape {
            kind,
            input_dim: feature_spec.input_dim(),
            k_fm: hp.k_fm,
            hidden: hp.hidden,
        };
        Self {
            user_id,
            shape,
            feature_spec,
            params: vec![0.0; shape.n_params()],
            train_mean,
        }
    }

    /// A model that predicts `value` everywhere.
    pub fn constant(
        user_id: usize,
        kind: MaskKind,
        feature_spec: FeatureSpec,
        hp: &MaskHyperparams,
        value: f64,
    ) -> Self {
        let mut model = Self::zero(user_id, kind, feature_spec, hp, value);
        let bias = match kind {
            MaskKind::OneOrder | MaskKind::TwoOrder => 0,
            MaskKind::HighOrder => model.params.len() - 1,
        };
        model.params[bias] = value;
        model
    }

    pub fn predict_input(&self, x: &[f64]) -> f64 {
        self.shape.forward(&self.params, x, None)
    }

    /// `f_u^mask(i)`.
    pub fn predict(&self, dataset: &Dataset, item: usize) -> f64 {
        self.predict_input(&self.feature_spec.input(dataset, self.user_id, item))
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&MaskModelFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<MaskModelFile>(text)?.try_into()
    }
}

/// Versioned JSON form: kind tag, shape metadata and named row-major arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskModelFile {
    pub version: u32,
    pub kind: MaskKind,
    pub user_id: usize,
    pub input_dim: usize,
    pub k_fm: usize,
    pub hidden: usize,
    pub feature_spec: FeatureSpec,
    pub train_mean: f64,
    pub weights: MaskWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "snake_case")]
pub enum MaskWeights {
    Linear {
        bias: f64,
        linear: Vec<f64>,
    },
    Factorization {
        bias: f64,
        linear: Vec<f64>,
        factors: Vec<f64>,
    },
    Network {
        hidden_weights: Vec<f64>,
        hidden_bias: Vec<f64>,
        output_weights: Vec<f64>,
        output_bias: f64,
    },
}

impl From<&MaskModel> for MaskModelFile {
    fn from(m: &MaskModel) -> Self {
        let d = m.shape.input_dim;
        let p = &m.params;
        let weights = match m.shape.kind {
            MaskKind::OneOrder => MaskWeights::Linear {
                bias: p[0],
                linear: p[1..=d].to_vec(),
            },
            MaskKind::TwoOrder => MaskWeights::Factorization {
                bias: p[0],
                linear: p[1..=d].to_vec(),
                factors: p[1 + d..].to_vec(),
            },
            MaskKind::HighOrder => {
                let h = m.shape.hidden;
                MaskWeights::Network {
                    hidden_weights: p[..h * d].to_vec(),
                    hidden_bias: p[h * d..h * d + h].to_vec(),
                    output_weights: p[h * d + h..h * d + 2 * h].to_vec(),
                    output_bias: p[h * d + 2 * h],
                }
            }
        };
        Self {
            version: MASK_MODEL_VERSION,
            kind: m.shape.kind,
            user_id: m.user_id,
            input_dim: d,
            k_fm: m.shape.k_fm,
            hidden: m.shape.hidden,
            feature_spec: m.feature_spec,
            train_mean: m.train_mean,
            weights,
        }
    }
}

impl TryFrom<MaskModelFile> for MaskModel {
    type Error = Error;

    fn try_from(f: MaskModelFile) -> Result<Self> {
        if f.version != MASK_MODEL_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported mask model version {}",
                f.version
            )));
        }
        let shape = ModelShape {
            kind: f.kind,
            input_dim: f.input_dim,
            k_fm: f.k_fm,
            hidden: f.hidden,
        };
        let params = match (f.kind, f.weights) {
            (MaskKind::OneOrder, MaskWeights::Linear { bias, linear }) => [vec![bias], linear].concat(),
            (MaskKind::TwoOrder, MaskWeights::Factorization { bias, linear, factors }) => {
                [vec![bias], linear, factors].concat()
            }
            (
                MaskKind::HighOrder,
                MaskWeights::Network {
                    hidden_weights,
                    hidden_bias,
                    output_weights,
                    output_bias,
                },
            ) => [hidden_weights, hidden_bias, output_weights, vec![output_bias]].concat(),
            (kind, _) => {
                return Err(Error::InvalidInput(format!(
                    "weights layout does not match kind {kind:?}"
                )))
            }
        };
        if params.len() != shape.n_params() || f.feature_spec.input_dim() != f.input_dim {
            return Err(Error::InvalidInput(
                "mask model weights do not match their shape".into(),
            ));
        }
        Ok(Self {
            user_id: f.user_id,
            shape,
            feature_spec: f.feature_spec,
            params,
            train_mean: f.train_mean,
        })
    }
}

/// Trains a party's private model on its train split only.
///
/// OneOrder is solved in closed form (ridge, unpenalized bias); TwoOrder and
/// HighOrder run full-batch gradient descent on the mean squared error. A
/// party whose training inputs carry no variation (including a single
/// rating) gets the constant mean-rating model.
pub fn train_mask_model(
    train: &[RatingTriple],
    dataset: &Dataset,
    spec: FeatureSpec,
    kind: MaskKind,
    hp: &MaskHyperparams,
    seed: u64,
) -> Result<MaskModel> {
    let user_id = train
        .first()
        .map(|t| t.user_id)
        .ok_or_else(|| Error::Empty("mask model training set".into()))?;
    let examples: Vec<(Vec<f64>, f64)> = train
        .iter()
        .map(|t| (spec.input(dataset, t.user_id, t.item_id), t.rating))
        .collect();
    fit_examples(user_id, &examples, spec, kind, hp, seed)
}

pub(crate) fn fit_examples(
    user_id: usize,
    examples: &[(Vec<f64>, f64)],
    spec: FeatureSpec,
    kind: MaskKind,
    hp: &MaskHyperparams,
    seed: u64,
) -> Result<MaskModel> {
    let n = examples.len();
    if n == 0 {
        return Err(Error::Empty("mask model training set".into()));
    }
    let mean = examples.iter().map(|e| e.1).sum::<f64>() / n as f64;
    // identical inputs, or identical targets (whose penalized optimum is the
    // bias alone)
    let degenerate =
        examples.iter().all(|(x, _)| x == &examples[0].0) || examples.iter().all(|(_, r)| *r == examples[0].1);
    if degenerate {
        return Ok(MaskModel::constant(user_id, kind, spec, hp, mean));
    }
    let mut model = MaskModel::zero(user_id, kind, spec, hp, mean);
    match kind {
        MaskKind::OneOrder => model.params = ridge_closed_form(examples, hp.l2, mean),
        MaskKind::TwoOrder | MaskKind::HighOrder => {
            let mut rng = rng::stream(seed, "mask-init", user_id as u64);
            let mut params = model.shape.init_params(mean, hp, &mut rng);
            for _ in 0..hp.epochs {
                let (_, grad) = model.shape.loss_and_gradient(&params, examples, hp.l2);
                for (p, g) in params.iter_mut().zip(&grad) {
                    *p -= hp.learning_rate * g;
                }
            }
            if params.iter().any(|p| !p.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "mask model for user {user_id} diverged; lower the learning rate"
                )));
            }
            model.params = params;
        }
    }
    Ok(model)
}

/// Minimizes `mean (r - b - w.x)^2 + l2 |w|^2` exactly.
fn ridge_closed_form(examples: &[(Vec<f64>, f64)], l2: f64, mean: f64) -> Vec<f64> {
    let n = examples.len();
    let d = examples[0].0.len();
    let mut x_mean = vec![0.0; d];
    for (x, _) in examples {
        for (m, v) in x_mean.iter_mut().zip(x) {
            *m += v / n as f64;
        }
    }
    let centered = DMatrix::from_fn(n, d, |r, c| examples[r].0[c] - x_mean[c]);
    let target = DVector::from_fn(n, |r, _| examples[r].1 - mean);
    let gram = centered.transpose() * &centered / n as f64 + DMatrix::identity(d, d) * l2;
    let rhs = centered.transpose() * target / n as f64;
    let w = gram
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map(|w| w.iter().copied().collect::<Vec<_>>())
        .unwrap_or_else(|_| vec![0.0; d]);
    let bias = mean - dot(&w, &x_mean);
    let mut params = Vec::with_capacity(d + 1);
    params.push(bias);
    params.extend(w);
    params
}
