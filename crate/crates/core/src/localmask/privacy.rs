use rand::Rng;
use serde::{Deserialize, Serialize};

use super::MaskModel;
use crate::dataio::{Dataset, RatingScale, RatingTriple};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrivacyGroup {
    /// Masked ratings reveal little; gradients go to the server in plaintext.
    Secure,
    /// Gradients are protected by pairwise masking.
    Insecure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub user_id: usize,
    pub j_estimate: f64,
    pub n_validation: usize,
    /// Set when the party had no validation ratings and J was measured on
    /// the training data instead.
    pub optimistic: bool,
}

impl PrivacyReport {
    pub fn group(&self, th_j: f64) -> PrivacyGroup {
        assign_group(self.j_estimate, th_j)
    }
}

/// Mean squared residual of the mask model on ratings rescaled to `[0, 1]`.
///
/// Uses the validation ratings when there are any, else the training ratings
/// (flagged optimistic).
pub fn estimate_privacy_indicator(
    model: &MaskModel,
    validation: &[RatingTriple],
    train: &[RatingTriple],
    dataset: &Dataset,
) -> PrivacyReport {
    let (sample, optimistic) = if validation.is_empty() {
        (train, true)
    } else {
        (validation, false)
    };
    let preds: Vec<f64> = sample.iter().map(|t| model.predict(dataset, t.item_id)).collect();
    let truths: Vec<f64> = sample.iter().map(|t| t.rating).collect();
    PrivacyReport {
        user_id: model.user_id,
        j_estimate: indicator(&preds, &truths, &dataset.scale),
        n_validation: validation.len(),
        optimistic,
    }
}

/// `(1/n) sum (r~ - f~)^2` with both sides mapped through the scale's
/// `[0, 1]` rescaling. Zero for an empty sample.
pub(crate) fn indicator(preds: &[f64], truths: &[f64], scale: &RatingScale) -> f64 {
    if preds.is_empty() {
        return 0.0;
    }
    let sum: f64 = preds
        .iter()
        .zip(truths)
        .map(|(f, r)| (scale.rescale(*r) - scale.rescale(*f)).powi(2))
        .sum();
    sum / preds.len() as f64
}

/// Smaller J means the masked ratings expose less, so the boundary counts
/// as secure.
pub fn assign_group(j_estimate: f64, th_j: f64) -> PrivacyGroup {
    if j_estimate <= th_j {
        PrivacyGroup::Secure
    } else {
        PrivacyGroup::Insecure
    }
}

/// `ln(2|F| / delta) / epsilon^2`: samples sufficient for empirical risk
/// minimization over a finite class to land within `epsilon` of the best
/// hypothesis with probability at least `1 - delta`.
pub fn sample_complexity_bound(hypothesis_count: usize, epsilon: f64, delta: f64) -> Result<f64> {
    if hypothesis_count == 0 {
        return Err(Error::InvalidInput("hypothesis class must be nonempty".into()));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) || !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "need epsilon in (0,1) and delta in (0,1], got {epsilon}, {delta}"
        )));
    }
    Ok((2.0 * hypothesis_count as f64 / delta).ln() / (epsilon * epsilon))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloOutcome {
    pub n_samples: usize,
    pub trials: usize,
    pub successes: usize,
}

impl MonteCarloOutcome {
    pub fn frequency(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

/// Simulates the bound on the finite class of constant predictors
/// `{0, 1/(m-1), ..., 1}` with Bernoulli(`p`) ratings and squared loss.
///
/// Each trial draws `ceil(bound)` samples, picks the empirical risk minimizer
/// and counts a success when its true risk is within `epsilon` of the best
/// constant's.
pub fn theorem1_monte_carlo(
    hypothesis_count: usize,
    epsilon: f64,
    delta: f64,
    p: f64,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloOutcome> {
    if hypothesis_count < 2 {
        return Err(Error::InvalidInput("need at least two constant hypotheses".into()));
    }
    let n = sample_complexity_bound(hypothesis_count, epsilon, delta)?.ceil() as usize;
    let constants: Vec<f64> = (0..hypothesis_count)
        .map(|j| j as f64 / (hypothesis_count - 1) as f64)
        .collect();
    // E[(R - c)^2] for R ~ Bernoulli(p)
    let risk = |c: f64| p * (1.0 - c).powi(2) + (1.0 - p) * c * c;
    let best = constants.iter().map(|&c| risk(c)).fold(f64::INFINITY, f64::min);
    let mut rng = rng::stream(seed, "theorem1", 0);
    let mut successes = 0;
    for _ in 0..trials {
        let ones = (0..n).filter(|_| rng.gen_bool(p)).count() as f64;
        let zeros = n as f64 - ones;
        let empirical = |c: f64| (ones * (1.0 - c).powi(2) + zeros * c * c) / n as f64;
        let chosen = constants
            .iter()
            .copied()
            .min_by(|a, b| empirical(*a).total_cmp(&empirical(*b)))
            .expect("nonempty class");
        if risk(chosen) <= best + epsilon {
            successes += 1;
        }
    }
    Ok(MonteCarloOutcome {
        n_samples: n,
        trials,
        successes,
    })
}
