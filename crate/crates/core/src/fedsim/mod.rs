//! Federated simulation: parties, server, the round loop and the baselines.

mod config;
mod run;
mod state;

pub use config::{Algorithm, DatasetFormat, DatasetSpec, DropoutEvent, ExperimentConfig, Observation};
pub use run::{
    party_splits, run_baseline, run_experiment, run_fedmf, run_fedmmf, run_repetition, train_context_model,
    train_masks, EvalPoint, ObservedParty, ObservedTruth, RunResult, TranscriptEvent,
};
pub use state::{masked_update, ItemFactors, MaskingContext, PartyState, ServerState, Upload};
