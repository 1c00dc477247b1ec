use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ExperimentConfig};
use super::state::{local_step, route_upload, ItemFactors, MaskingContext, PartyState, ServerState, Upload};
use crate::dataio::{split_party, Dataset, PartySplit};
use crate::error::{Error, Result};
use crate::localmask::{
    self, estimate_privacy_indicator, mask_ratings, train_mask_model, FeatureSpec, MaskKind, MaskModel, MaskedRating,
    ModelShape, PrivacyGroup, PrivacyReport,
};
use crate::mfcore::{self, LatentFactors};
use crate::rng;
use crate::secagg::wire::{encode_message, Payload, WireMessage};
use crate::secagg::{adaptive_aggregate, MaskedSubmission, PlainSubmission, SecAggSetup};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub round: usize,
    pub rmse: f64,
    pub mae: f64,
    pub validation_rmse: Option<f64>,
}

/// What the server received, in arrival order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TranscriptEvent {
    /// A party asked for the factors of these items.
    Request {
        round: usize,
        party: usize,
        items: Vec<usize>,
    },
    /// A party's wire-encoded upload.
    Upload {
        round: usize,
        party: usize,
        message: Vec<u8>,
    },
}

/// Ground truth the simulator knows about an observed party.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedTruth {
    /// `p` after the first observed round's update.
    pub p_prev: Vec<f64>,
    /// `p` after the second observed round's update.
    pub p_curr: Vec<f64>,
    /// The values the party fit (masked ratings under FedMMF).
    pub targets: Vec<f64>,
    pub ratings: Vec<f64>,
}

/// A party's uploads in two consecutive rounds together with the item
/// factors it downloaded, i.e. the server's view, plus the truth for scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedParty {
    pub party: usize,
    pub group: PrivacyGroup,
    pub items: Vec<usize>,
    pub q_prev: Vec<Vec<f64>>,
    pub eta_prev: Vec<Vec<f64>>,
    pub q_curr: Vec<Vec<f64>>,
    pub eta_curr: Vec<Vec<f64>>,
    pub truth: ObservedTruth,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub algorithm: String,
    pub dataset: String,
    pub repetition: usize,
    pub seed: u64,
    pub rmse: f64,
    pub mae: f64,
    pub rounds_run: usize,
    pub history: Vec<EvalPoint>,
    /// Final user and item factors (federated MF variants).
    pub factors: Option<LatentFactors>,
    pub mask_models: Vec<MaskModel>,
    pub privacy: Vec<PrivacyReport>,
    pub groups: Vec<PrivacyGroup>,
    pub masked_ratings: Vec<MaskedRating>,
    pub transcript: Vec<TranscriptEvent>,
    pub observations: Vec<ObservedParty>,
    pub phase_seconds: BTreeMap<String, f64>,
}

impl RunResult {
    fn empty(config: &ExperimentConfig, dataset: &Dataset, repetition: usize, seed: u64) -> Self {
        Self {
            algorithm: config.algorithm.label(),
            dataset: dataset.name.clone(),
            repetition,
            seed,
            rmse: f64::NAN,
            mae: f64::NAN,
            rounds_run: 0,
            history: Vec::new(),
            factors: None,
            mask_models: Vec::new(),
            privacy: Vec::new(),
            groups: Vec::new(),
            masked_ratings: Vec::new(),
            transcript: Vec::new(),
            observations: Vec::new(),
            phase_seconds: BTreeMap::new(),
        }
    }
}

/// A party's round output: id, kept plaintext gradients, upload.
type PartyOutput = (usize, Option<BTreeMap<usize, Vec<f64>>>, Upload);

/// Per-user splits for one repetition.
pub fn party_splits(dataset: &Dataset, config: &ExperimentConfig, seed: u64) -> Vec<PartySplit> {
    dataset
        .ratings_by_user()
        .iter()
        .enumerate()
        .map(|(u, ratings)| {
            if ratings.is_empty() {
                PartySplit {
                    user_id: u,
                    train: Vec::new(),
                    validation: Vec::new(),
                    test: Vec::new(),
                }
            } else {
                split_party(ratings, config.split, seed)
            }
        })
        .collect()
}

/// Trains every party's private model (item features only).
pub fn train_masks(
    dataset: &Dataset,
    splits: &[PartySplit],
    kind: MaskKind,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<MaskModel>> {
    let spec = FeatureSpec::item_only(dataset);
    let fit = |s: &PartySplit| train_mask_model(&s.train, dataset, spec, kind, &config.mask, seed);
    if config.parallel {
        splits.par_iter().map(fit).collect()
    } else {
        splits.iter().map(fit).collect()
    }
}

/// Runs every repetition of `config` on an already loaded dataset.
pub fn run_experiment(config: &ExperimentConfig, dataset: &Dataset) -> Result<Vec<RunResult>> {
    config.validate()?;
    dataset.validate()?;
    (0..config.repetitions)
        .map(|rep| run_repetition(config, dataset, rep))
        .collect()
}

pub fn run_repetition(config: &ExperimentConfig, dataset: &Dataset, repetition: usize) -> Result<RunResult> {
    match config.algorithm {
        Algorithm::FedMf => run_fedmf(config, dataset, repetition),
        Algorithm::FedMmf { .. } => run_fedmmf(config, dataset, repetition),
        Algorithm::LocalOnly { .. } | Algorithm::FedContext { .. } => run_baseline(config, dataset, repetition),
    }
}

/// Vanilla federated MF on raw ratings with plaintext aggregation.
pub fn run_fedmf(config: &ExperimentConfig, dataset: &Dataset, repetition: usize) -> Result<RunResult> {
    if config.algorithm != Algorithm::FedMf {
        return Err(Error::config("algorithm", "run_fedmf needs the fed_mf algorithm"));
    }
    let seed = config.repetition_seed(repetition);
    let splits = party_splits(dataset, config, seed);
    let mut result = RunResult::empty(config, dataset, repetition, seed);
    let parties = splits
        .into_iter()
        .map(|split| PartyState {
            user_id: split.user_id,
            p: Vec::new(),
            split,
            mask_model: None,
            masked_ratings: Vec::new(),
            group: PrivacyGroup::Secure,
            pair_seeds: Default::default(),
        })
        .collect();
    federate(config, dataset, parties, seed, &mut result)?;
    Ok(result)
}

/// Federated masked MF: private mask models, grouping by privacy indicator,
/// then rounds of MaskedUpdate with adaptive secure aggregation.
pub fn run_fedmmf(config: &ExperimentConfig, dataset: &Dataset, repetition: usize) -> Result<RunResult> {
    let Algorithm::FedMmf { mask, zero_mask } = config.algorithm else {
        return Err(Error::config("algorithm", "run_fedmmf needs the fed_mmf algorithm"));
    };
    let seed = config.repetition_seed(repetition);
    let splits = party_splits(dataset, config, seed);
    let mut result = RunResult::empty(config, dataset, repetition, seed);

    let started = Instant::now();
    let models = if zero_mask {
        // no inputs at all: predicts 0 and falls back to the train mean
        // for untrained items exactly as FedMF does
        let none = FeatureSpec {
            use_user: false,
            use_item: false,
            user_dim: 0,
            item_dim: 0,
        };
        splits
            .iter()
            .map(|s| MaskModel::zero(s.user_id, mask, none, &config.mask, train_mean(s)))
            .collect()
    } else {
        train_masks(dataset, &splits, mask, config, seed)?
    };
    result
        .phase_seconds
        .insert("mask_training".into(), started.elapsed().as_secs_f64());

    let mut parties = Vec::with_capacity(splits.len());
    for (split, model) in splits.into_iter().zip(models) {
        let report = estimate_privacy_indicator(&model, &split.validation, &split.train, dataset);
        let masked = mask_ratings(&split.train, &model, dataset);
        result.privacy.push(report);
        result.masked_ratings.extend_from_slice(&masked);
        parties.push(PartyState {
            user_id: split.user_id,
            p: Vec::new(),
            group: report.group(config.th_j),
            split,
            mask_model: Some(model),
            masked_ratings: masked,
            pair_seeds: Default::default(),
        });
    }
    federate(config, dataset, parties, seed, &mut result)?;
    Ok(result)
}

fn train_mean(split: &PartySplit) -> f64 {
    if split.train.is_empty() {
        return 0.0;
    }
    split.train.iter().map(|t| t.rating).sum::<f64>() / split.train.len() as f64
}

/// The round loop shared by FedMF and FedMMF.
fn federate(
    config: &ExperimentConfig,
    dataset: &Dataset,
    mut parties: Vec<PartyState>,
    seed: u64,
    result: &mut RunResult,
) -> Result<()> {
    let started = Instant::now();
    let mut hp = config.hyperparams;
    hp.seed = seed;
    let k = hp.k;
    let init = LatentFactors::random(
        dataset.n_users,
        dataset.n_items,
        k,
        &mut rng::stream(seed, "factors", 0),
    );
    for party in &mut parties {
        party.p = init.user(party.user_id).to_vec();
    }
    let mut server = ServerState {
        item_factors: ItemFactors {
            k,
            n_items: dataset.n_items,
            values: init.item_matrix().to_vec(),
        },
        round: 0,
        config: config.clone(),
        aggregate: BTreeMap::new(),
    };

    let insecure: Vec<usize> = parties
        .iter()
        .filter(|p| p.group == PrivacyGroup::Insecure)
        .map(|p| p.user_id)
        .collect();
    let setup = SecAggSetup::new(insecure.iter().copied(), config.shamir_threshold, seed, config.field)?;
    for party in parties.iter_mut().filter(|p| p.group == PrivacyGroup::Insecure) {
        party.pair_seeds = setup.seed_book(party.user_id);
    }
    let mut rosters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for party in parties.iter().filter(|p| p.group == PrivacyGroup::Insecure) {
        for item in party.rated_items() {
            rosters.entry(item).or_default().push(party.user_id);
        }
    }
    let mut trained = vec![false; dataset.n_items];
    for party in &parties {
        for t in &party.split.train {
            trained[t.item_id] = true;
        }
    }
    result.groups = parties.iter().map(|p| p.group).collect();
    result
        .phase_seconds
        .insert("setup".into(), started.elapsed().as_secs_f64());

    let started = Instant::now();
    let mut dropped: BTreeSet<usize> = BTreeSet::new();
    let mut best_validation = f64::INFINITY;
    let mut stale = 0;
    let observe = config.observe.clone();
    let mut observed: BTreeMap<usize, ObservedParty> = BTreeMap::new();
    for round in 1..=hp.epochs {
        let dropping: BTreeSet<usize> = config
            .dropouts
            .iter()
            .filter(|d| d.round == round)
            .map(|d| d.party)
            .collect();
        let ctx = MaskingContext {
            rosters: &rosters,
            params: config.field,
        };
        let items = &server.item_factors;
        let watched = |party: usize| {
            observe
                .as_ref()
                .is_some_and(|o| (round == o.round || round == o.round + 1) && o.parties.contains(&party))
        };
        // plaintext gradients are kept only for observed parties
        let work = |party: &mut PartyState| -> Result<PartyOutput> {
            let gradients = local_step(party, items, &hp);
            let kept = watched(party.user_id).then(|| gradients.clone());
            let upload = route_upload(party, gradients, round, &ctx)?;
            Ok((party.user_id, kept, upload))
        };
        let alive = |p: &&mut PartyState| !dropped.contains(&p.user_id) && !p.split.train.is_empty();
        let outputs: Vec<PartyOutput> = if config.parallel {
            parties.par_iter_mut().filter(alive).map(work).collect::<Result<_>>()?
        } else {
            parties.iter_mut().filter(alive).map(work).collect::<Result<_>>()?
        };

        if let Some(obs) = &observe {
            if round == obs.round || round == obs.round + 1 {
                for (party_id, gradients) in outputs.iter().filter_map(|(p, g, _)| g.as_ref().map(|g| (p, g))) {
                    let party = &parties[*party_id];
                    let q: Vec<Vec<f64>> = gradients.keys().map(|&i| server.item_factors.row(i).to_vec()).collect();
                    let eta: Vec<Vec<f64>> = gradients.values().cloned().collect();
                    if round == obs.round {
                        let targets = party.targets();
                        observed.insert(
                            *party_id,
                            ObservedParty {
                                party: *party_id,
                                group: party.group,
                                items: gradients.keys().copied().collect(),
                                q_prev: q,
                                eta_prev: eta,
                                q_curr: Vec::new(),
                                eta_curr: Vec::new(),
                                truth: ObservedTruth {
                                    p_prev: party.p.clone(),
                                    p_curr: Vec::new(),
                                    targets: targets.iter().map(|t| t.1).collect(),
                                    ratings: party.split.train.iter().map(|t| t.rating).collect(),
                                },
                            },
                        );
                    } else if let Some(o) = observed.get_mut(party_id) {
                        o.q_curr = q;
                        o.eta_curr = eta;
                        o.truth.p_curr = party.p.clone();
                    }
                }
            }
        }

        let mut plain: Vec<PlainSubmission> = Vec::new();
        let mut masked: Vec<MaskedSubmission> = Vec::new();
        for (party_id, _, upload) in outputs {
            if config.transcript {
                let items = match &upload {
                    Upload::Plain(s) => s.gradients.keys().copied().collect(),
                    Upload::Masked(s) => s.shares.keys().copied().collect(),
                };
                result.transcript.push(TranscriptEvent::Request {
                    round,
                    party: party_id,
                    items,
                });
            }
            if dropping.contains(&party_id) {
                continue;
            }
            if config.transcript {
                let payload = match &upload {
                    Upload::Plain(s) => Payload::Plain(s.gradients.clone()),
                    Upload::Masked(s) => Payload::Masked(s.shares.clone()),
                };
                let message = encode_message(&WireMessage {
                    party_id: party_id as u32,
                    round: round as u32,
                    heartbeat: true,
                    k: k as u32,
                    payload,
                })?;
                result.transcript.push(TranscriptEvent::Upload {
                    round,
                    party: party_id,
                    message,
                });
            }
            match upload {
                Upload::Plain(s) => plain.push(s),
                Upload::Masked(s) => masked.push(s),
            }
        }
        dropped.extend(dropping.iter().copied());
        server.aggregate = adaptive_aggregate(&plain, &masked, &dropped, &rosters, &setup, round as u64, k)?;
        server.apply_aggregate(hp.gamma);
        server.round = round;
        if !dropping.is_empty() {
            for roster in rosters.values_mut() {
                roster.retain(|p| !dropping.contains(p));
            }
        }
        result.rounds_run = round;

        if round % config.eval_every == 0 || round == hp.epochs {
            let (rmse, mae) = evaluate(&parties, &server.item_factors, dataset, &trained, Part::Test)?;
            let validation_rmse =
                Some(evaluate(&parties, &server.item_factors, dataset, &trained, Part::Validation)?.0)
                    .filter(|v| !v.is_nan());
            result.history.push(EvalPoint {
                round,
                rmse,
                mae,
                validation_rmse,
            });
            if let (Some(patience), Some(v)) = (config.early_stopping_patience, validation_rmse) {
                if v < best_validation {
                    best_validation = v;
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= patience {
                        break;
                    }
                }
            }
        }
    }
    result
        .phase_seconds
        .insert("federation".into(), started.elapsed().as_secs_f64());

    let last = result
        .history
        .last()
        .copied()
        .ok_or_else(|| Error::Empty("evaluation history".into()))?;
    result.rmse = last.rmse;
    result.mae = last.mae;
    let mut factors = LatentFactors::zeros(dataset.n_users, dataset.n_items, k);
    for party in &parties {
        factors.user_mut(party.user_id).copy_from_slice(&party.p);
    }
    for item in 0..dataset.n_items {
        factors.item_mut(item).copy_from_slice(server.item_factors.row(item));
    }
    result.factors = Some(factors);
    result.observations = observed.into_values().collect();
    result.mask_models = parties.into_iter().filter_map(|p| p.mask_model).collect();
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Part {
    Validation,
    Test,
}

/// Pooled RMSE / MAE of clipped predictions over every party's chosen split.
fn evaluate(
    parties: &[PartyState],
    items: &ItemFactors,
    dataset: &Dataset,
    trained: &[bool],
    part: Part,
) -> Result<(f64, f64)> {
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    for party in parties {
        let ratings = match part {
            Part::Validation => &party.split.validation,
            Part::Test => &party.split.test,
        };
        for t in ratings {
            let q = trained[t.item_id].then(|| items.row(t.item_id));
            let pred = match (&party.mask_model, q) {
                (Some(model), q) => localmask::predict_fedmmf(&party.p, q, model, dataset, t.item_id),
                (None, Some(q)) => dataset.scale.clip(mfcore::dot(q, &party.p)),
                (None, None) => train_mean(&party.split),
            };
            preds.push(pred);
            truths.push(t.rating);
        }
    }
    if preds.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    mfcore::rmse_mae(&preds, &truths)
}

/// LocalOnly and FedContext baselines.
pub fn run_baseline(config: &ExperimentConfig, dataset: &Dataset, repetition: usize) -> Result<RunResult> {
    let seed = config.repetition_seed(repetition);
    let splits = party_splits(dataset, config, seed);
    let mut result = RunResult::empty(config, dataset, repetition, seed);
    let started = Instant::now();
    let (preds, truths): (Vec<f64>, Vec<f64>) = match config.algorithm {
        Algorithm::LocalOnly { mask } => {
            let models = train_masks(dataset, &splits, mask, config, seed)?;
            let pairs = splits
                .iter()
                .zip(&models)
                .flat_map(|(s, m)| {
                    s.test
                        .iter()
                        .map(move |t| (dataset.scale.clip(m.predict(dataset, t.item_id)), t.rating))
                })
                .collect();
            result.mask_models = models;
            pairs
        }
        Algorithm::FedContext { mask } => {
            let (shape, spec, params) = train_context_model(dataset, &splits, mask, config, seed)?;
            splits
                .iter()
                .flat_map(|s| {
                    let params = &params;
                    s.test.iter().map(move |t| {
                        let x = spec.input(dataset, t.user_id, t.item_id);
                        (dataset.scale.clip(shape.forward(params, &x, None)), t.rating)
                    })
                })
                .collect()
        }
        _ => {
            return Err(Error::config(
                "algorithm",
                "run_baseline needs local_only or fed_context",
            ))
        }
    };
    result
        .phase_seconds
        .insert("training".into(), started.elapsed().as_secs_f64());
    let (rmse, mae) = mfcore::rmse_mae(&preds, &truths)?;
    result.rmse = rmse;
    result.mae = mae;
    result.rounds_run = match config.algorithm {
        Algorithm::FedContext { .. } => config.mask.epochs,
        _ => 0,
    };
    result.history.push(EvalPoint {
        round: result.rounds_run,
        rmse,
        mae,
        validation_rmse: None,
    });
    Ok(result)
}

/// Federated averaging of full-batch gradients: every round each party
/// computes the gradient of its own mean loss at the shared parameters and
/// the server steps along their equal-weight average.
pub fn train_context_model(
    dataset: &Dataset,
    splits: &[PartySplit],
    kind: MaskKind,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(ModelShape, FeatureSpec, Vec<f64>)> {
    let spec = FeatureSpec::user_and_item(dataset);
    let hp = &config.mask;
    let shape = ModelShape {
        kind,
        input_dim: spec.input_dim(),
        k_fm: hp.k_fm,
        hidden: hp.hidden,
    };
    let local: Vec<Vec<(Vec<f64>, f64)>> = splits
        .iter()
        .filter(|s| !s.train.is_empty())
        .map(|s| {
            s.train
                .iter()
                .map(|t| (spec.input(dataset, t.user_id, t.item_id), t.rating))
                .collect()
        })
        .collect();
    if local.is_empty() {
        return Err(Error::Empty("training ratings".into()));
    }
    let mean = local
        .iter()
        .map(|ex| ex.iter().map(|e| e.1).sum::<f64>() / ex.len() as f64)
        .sum::<f64>()
        / local.len() as f64;
    let mut params = shape.init_params(mean, hp, &mut rng::stream(seed, "context-init", 0));
    let n = local.len() as f64;
    for _ in 0..hp.epochs {
        let grads: Vec<Vec<f64>> = if config.parallel {
            local
                .par_iter()
                .map(|ex| shape.loss_and_gradient(&params, ex, hp.l2).1)
                .collect()
        } else {
            local
                .iter()
                .map(|ex| shape.loss_and_gradient(&params, ex, hp.l2).1)
                .collect()
        };
        let mut avg = vec![0.0; params.len()];
        for g in &grads {
            avg.iter_mut().zip(g).for_each(|(a, b)| *a += b / n);
        }
        params
            .iter_mut()
            .zip(&avg)
            .for_each(|(p, g)| *p -= hp.learning_rate * g);
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidInput(
            "context model diverged; lower mask.learning_rate".into(),
        ));
    }
    Ok((shape, spec, params))
}
