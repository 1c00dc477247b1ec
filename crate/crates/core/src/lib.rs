//! Federated masked matrix factorization.
//!
//! Each party (one user) trains a private model on its own ratings and
//! subtracts that model's prediction from every rating before federated
//! matrix factorization starts. The federation then only ever sees
//! gradients of the residuals. Parties whose private model leaves too much
//! of the rating signal in the residual are routed through pairwise-masked
//! secure aggregation over a prime field; the rest send plaintext.
//!
//! Module map:
//!
//! * [`dataio`]: MovieLens / LastFM ingestion, TF-IDF, PCA, per-party splits.
//! * [`localmask`]: private mask models, masked ratings, privacy indicator.
//! * [`mfcore`]: matrix factorization prediction, loss, updates, metrics.
//! * [`secagg`]: fixed-point field encoding, pair masks, Shamir sharing,
//!   adaptive aggregation, wire format.
//! * [`fedsim`]: party and server state machines and the training loop.
//! * [`attacks`]: gradient leakage solver, recovery and ranking attacks.
//! * [`cli`]: the `prepare` / `run` / `attack` / `report` commands.

// index loops read closer to the math in the numeric kernels, and
// `!(a < b)` is deliberate where NaN must be rejected
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod attacks;
pub mod cli;
pub mod dataio;
pub mod error;
pub mod fedsim;
pub mod localmask;
pub mod mfcore;
pub mod rng;
pub mod secagg;

pub use error::{Error, Result};
