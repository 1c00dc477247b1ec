use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::field::{decode, FieldParams, FieldVector};
use super::masking::{PairMaskStream, PairSeed, SeedBook};
use super::shamir::{seed_from_limbs, seed_limbs, shamir_reconstruct, Polynomial, ShamirShare, SEED_LIMBS};
use crate::error::{Error, Result};
use crate::rng;

/// Default Shamir threshold: `ceil(2n / 3)`.
pub fn default_threshold(n: usize) -> usize {
    (2 * n).div_ceil(3)
}

/// Output of the simulated key agreement among the insecure group: one
/// random 128-bit seed per pair, each seed Shamir-shared (limb by limb)
/// among all group members at points `x = position in group + 1`.
///
/// Shares are re-derived from the dealer's keyed stream on demand rather
/// than stored, which keeps memory linear in the number of pairs.
#[derive(Debug, Clone)]
pub struct SecAggSetup {
    params: FieldParams,
    members: Vec<usize>,
    threshold: usize,
    seed: u64,
    seeds: BTreeMap<(usize, usize), PairSeed>,
}

impl SecAggSetup {
    pub fn new(
        members: impl IntoIterator<Item = usize>,
        threshold: Option<usize>,
        seed: u64,
        params: FieldParams,
    ) -> Result<Self> {
        params.validate()?;
        let members: Vec<usize> = members.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let n = members.len();
        let threshold = threshold.unwrap_or_else(|| default_threshold(n));
        if n > 0 && !(1..=n).contains(&threshold) {
            return Err(Error::Sharing(format!("threshold {threshold} must be in 1..={n}")));
        }
        let mut seeds = BTreeMap::new();
        for (a, &low) in members.iter().enumerate() {
            for &high in &members[a + 1..] {
                let mut rng = rng::stream(seed, "pair-seed", pair_index(low, high));
                let value = (rng.next_u64() as u128) << 64 | rng.next_u64() as u128;
                seeds.insert((low, high), PairSeed::new(low, high, value)?);
            }
        }
        Ok(Self {
            params,
            members,
            threshold,
            seed,
            seeds,
        })
    }

    pub fn params(&self) -> &FieldParams {
        &self.params
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn is_member(&self, party: usize) -> bool {
        self.members.binary_search(&party).is_ok()
    }

    /// The pair seeds `party` learned during key agreement.
    pub fn seed_book(&self, party: usize) -> SeedBook {
        let mut book = SeedBook::new();
        if !self.is_member(party) {
            return book;
        }
        for &other in &self.members {
            if let Some(seed) = self.seeds.get(&(party.min(other), party.max(other))) {
                book.insert(other, *seed);
            }
        }
        book
    }

    fn dealer_polynomials(&self, low: usize, high: usize) -> Result<[Polynomial; SEED_LIMBS]> {
        let seed = self
            .seeds
            .get(&(low.min(high), low.max(high)))
            .ok_or(Error::MissingPairSeed { low, high })?;
        let limbs = seed_limbs(seed.seed);
        let mut rng = rng::stream(self.seed, "pair-share", pair_index(seed.party_low, seed.party_high));
        Ok(limbs.map(|limb| Polynomial::random(limb, self.threshold, &self.params, &mut rng)))
    }

    /// The shares of pair `(low, high)`'s seed held by each of `holders`.
    pub fn shares_held_by(&self, low: usize, high: usize, holders: &[usize]) -> Result<Vec<[ShamirShare; SEED_LIMBS]>> {
        let polys = self.dealer_polynomials(low, high)?;
        let secret_base = pair_index(low.min(high), low.max(high)) * SEED_LIMBS as u64;
        holders
            .iter()
            .map(|&holder| {
                let position = self
                    .members
                    .binary_search(&holder)
                    .map_err(|_| Error::Protocol(format!("party {holder} holds no shares")))?;
                let x = position as u64 + 1;
                let mut limb = 0;
                Ok(polys.each_ref().map(|poly| {
                    let share = ShamirShare {
                        owner: holder,
                        x,
                        y: poly.eval(x, &self.params),
                        threshold: self.threshold,
                        secret_id: secret_base + limb,
                    };
                    limb += 1;
                    share
                }))
            })
            .collect()
    }

    /// Rebuilds a pair seed from shares, limb by limb.
    pub fn recover_pair_seed(&self, low: usize, high: usize, shares: &[[ShamirShare; SEED_LIMBS]]) -> Result<PairSeed> {
        let mut limbs = [0u64; SEED_LIMBS];
        for (l, limb) in limbs.iter_mut().enumerate() {
            let column: Vec<ShamirShare> = shares.iter().map(|s| s[l]).collect();
            *limb = shamir_reconstruct(&column, &self.params)?;
        }
        PairSeed::new(low, high, seed_from_limbs(limbs))
    }
}

fn pair_index(low: usize, high: usize) -> u64 {
    (low as u64) << 32 | high as u64
}

/// Plaintext item gradients from a secure-group party.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlainSubmission {
    pub party: usize,
    pub gradients: BTreeMap<usize, Vec<f64>>,
}

/// Masked, encoded item gradients from an insecure-group party.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedSubmission {
    pub party: usize,
    pub shares: BTreeMap<usize, FieldVector>,
}

/// Combines one round's submissions into per-item gradient sums.
///
/// `rosters[item]` is the announced list of insecure parties whose masks
/// meet in that item's sum. Plaintext gradients are summed in ascending
/// party order. Masked shares are summed in the field; masks a dropped
/// party would have cancelled are removed using pair seeds rebuilt from
/// the surviving members' Shamir shares.
pub fn adaptive_aggregate(
    plain: &[PlainSubmission],
    masked: &[MaskedSubmission],
    dropouts: &BTreeSet<usize>,
    rosters: &BTreeMap<usize, Vec<usize>>,
    setup: &SecAggSetup,
    round: u64,
    k: usize,
) -> Result<BTreeMap<usize, Vec<f64>>> {
    let params = setup.params();
    let mut out: BTreeMap<usize, Vec<f64>> = BTreeMap::new();

    let mut plain_order: Vec<&PlainSubmission> = plain.iter().filter(|s| !dropouts.contains(&s.party)).collect();
    plain_order.sort_by_key(|s| s.party);
    for sub in plain_order {
        for (&item, grad) in &sub.gradients {
            if grad.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: grad.len(),
                });
            }
            match out.get_mut(&item) {
                Some(acc) => acc.iter_mut().zip(grad).for_each(|(a, g)| *a += g),
                None => {
                    out.insert(item, grad.clone());
                }
            }
        }
    }

    if masked.is_empty() && rosters.values().all(|r| r.iter().all(|p| dropouts.contains(p))) {
        return Ok(out);
    }

    let submitted: BTreeMap<usize, &MaskedSubmission> = masked.iter().map(|s| (s.party, s)).collect();
    for &party in submitted.keys() {
        if !setup.is_member(party) {
            return Err(Error::Protocol(format!(
                "party {party} sent masked shares but is not in the insecure group"
            )));
        }
        if dropouts.contains(&party) {
            return Err(Error::Protocol(format!(
                "party {party} is marked dropped but submitted"
            )));
        }
    }
    let dropped_members: Vec<usize> = dropouts.iter().copied().filter(|p| setup.is_member(*p)).collect();
    let survivors: Vec<usize> = setup
        .members()
        .iter()
        .copied()
        .filter(|p| !dropouts.contains(p))
        .collect();
    if !dropped_members.is_empty() && survivors.len() < setup.threshold() {
        return Err(Error::TooManyDropouts {
            round: round as usize,
            survivors: survivors.len(),
            threshold: setup.threshold(),
        });
    }
    let shareholders = &survivors[..setup.threshold().min(survivors.len())];
    let mut recovered: BTreeMap<(usize, usize), PairMaskStream> = BTreeMap::new();

    let mut field_sums: BTreeMap<usize, FieldVector> = BTreeMap::new();
    for (&item, roster) in rosters {
        let mut sum = FieldVector::zeros(k);
        let mut any = false;
        for &party in roster {
            if dropouts.contains(&party) {
                continue;
            }
            let share = submitted
                .get(&party)
                .and_then(|s| s.shares.get(&item))
                .ok_or_else(|| Error::Protocol(format!("party {party} did not submit item {item}")))?;
            if share.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: share.len(),
                });
            }
            sum.add_assign(share, params);
            any = true;
        }
        if !any {
            continue;
        }
        for &gone in roster.iter().filter(|p| dropouts.contains(p)) {
            for &party in roster.iter().filter(|p| !dropouts.contains(p)) {
                let key = (party.min(gone), party.max(gone));
                if let Entry::Vacant(e) = recovered.entry(key) {
                    let shares = setup.shares_held_by(key.0, key.1, shareholders)?;
                    let seed = setup.recover_pair_seed(key.0, key.1, &shares)?;
                    e.insert(PairMaskStream::new(&seed, round));
                }
                // the survivor added the mask when it was the lower index
                recovered.get_mut(&key).expect("inserted above").add_into(
                    item as u64,
                    &mut sum.0,
                    party > gone,
                    params,
                );
            }
        }
        field_sums.insert(item, sum);
    }
    for sub in submitted.values() {
        for item in sub.shares.keys() {
            if !rosters.get(item).is_some_and(|r| r.contains(&sub.party)) {
                return Err(Error::Protocol(format!(
                    "party {} sent item {item} without being on its roster",
                    sub.party
                )));
            }
        }
    }

    for (item, sum) in field_sums {
        let decoded = decode(&sum, params);
        match out.get_mut(&item) {
            Some(acc) => acc.iter_mut().zip(&decoded).for_each(|(a, d)| *a += d),
            None => {
                out.insert(item, decoded);
            }
        }
    }
    Ok(out)
}
