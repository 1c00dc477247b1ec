//! Adaptive secure aggregation.
//!
//! Parties whose masked ratings are already safe to expose send plaintext
//! item gradients; the rest encode theirs into a prime field and add
//! pairwise masks that cancel in the sum. Pair seeds are Shamir-shared so
//! the server can strip the masks of a party that drops out mid-round.

mod aggregate;
mod field;
mod masking;
mod shamir;
pub mod wire;

pub use aggregate::{adaptive_aggregate, default_threshold, MaskedSubmission, PlainSubmission, SecAggSetup};
pub use field::{decode, encode, FieldParams, FieldVector, MERSENNE_61};
pub use masking::{derive_pair_mask, mask_gradient, PairMaskStream, PairSeed, PartyMasker, SeedBook};
pub use shamir::{seed_from_limbs, seed_limbs, shamir_reconstruct, shamir_split, Polynomial, ShamirShare, SEED_LIMBS};
