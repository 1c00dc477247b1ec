//! What an adversary learns.
//!
//! Against plain federated MF an honest-but-curious server can solve for a
//! party's rating from two consecutive item gradients and the known
//! user-update rule ([`gradient_leakage_solve`]). Against masked ratings
//! the same solver only yields the residual `r - f(i)`, so the remaining
//! attacks work on the masked values directly: rescale them to the rating
//! range ([`recovery_attack`]) or read off the top items
//! ([`ranking_attack`]).

mod inference;
mod leakage;

pub use inference::{
    attack_report, ranking_attack, recovery_attack, rescale_to_range, top_count, AttackReport, Histogram, HistogramBin,
    PartyAttack, PartyRatings,
};
pub use leakage::{
    gradient_leakage_solve, instance_from_observation, random_instance, simulate_instance, LeakageInstance,
    LeakageSolution, LeakageStatus, LeakageTruth, SolverOptions,
};

#[cfg(test)]
mod tests;
