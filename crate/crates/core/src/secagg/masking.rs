use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::field::{FieldParams, FieldVector};
use crate::error::{Error, Result};

/// Secret shared by one unordered pair of insecure parties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSeed {
    pub party_low: usize,
    pub party_high: usize,
    pub seed: u128,
}

impl PairSeed {
    pub fn new(a: usize, b: usize, seed: u128) -> Result<Self> {
        if a == b {
            return Err(Error::Protocol(format!("party {a} cannot pair with itself")));
        }
        Ok(Self {
            party_low: a.min(b),
            party_high: a.max(b),
            seed,
        })
    }
}

/// Generator for every mask a pair uses in one round. The key depends on
/// `(seed, round)`; each item reads its own ChaCha stream, so masks for
/// different items are independent and need no rehashing.
pub struct PairMaskStream {
    key: [u8; 32],
}

impl PairMaskStream {
    pub fn new(seed: &PairSeed, round: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"fedmmf/v1/pair-mask\0");
        hasher.update(seed.seed.to_le_bytes());
        hasher.update(round.to_le_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        Self { key }
    }

    pub fn mask(&self, item: u64, k: usize, params: &FieldParams) -> FieldVector {
        let mut out = FieldVector::zeros(k);
        self.add_into(item, &mut out.0, true, params);
        out
    }

    /// Adds (or subtracts) the item's mask into `acc` without materializing it.
    pub fn add_into(&self, item: u64, acc: &mut [u64], add: bool, params: &FieldParams) {
        // a fresh generator has an empty buffer, so selecting the stream
        // costs nothing until the first draw
        let mut rng = ChaCha20Rng::from_seed(self.key);
        rng.set_stream(item);
        for a in acc.iter_mut() {
            let m = params.random(&mut rng);
            *a = if add { params.add(*a, m) } else { params.sub(*a, m) };
        }
    }
}

/// `s_{u,v}` for `(round, item)`; both members of the pair derive the same vector.
pub fn derive_pair_mask(seed: &PairSeed, round: u64, item: u64, k: usize, params: &FieldParams) -> FieldVector {
    PairMaskStream::new(seed, round).mask(item, k, params)
}

/// Pair seeds one party holds, keyed by the other member.
pub type SeedBook = BTreeMap<usize, PairSeed>;

/// Adds `s_{u,v}` for every roster member `v > u` and subtracts `s_{v,u}` for
/// every `v < u`, all mod `l`. `roster` lists the insecure parties taking part
/// in this item's sum and may include `party` itself.
pub fn mask_gradient(
    encoded: &FieldVector,
    party: usize,
    roster: &[usize],
    seeds: &SeedBook,
    round: u64,
    item: u64,
    params: &FieldParams,
) -> Result<FieldVector> {
    PartyMasker::new(party, seeds, round, *params).mask(encoded, roster, item)
}

/// One party's masking state for a round; keeps a keyed stream per partner
/// so that masking many items rehashes each pair seed once.
pub struct PartyMasker<'a> {
    party: usize,
    seeds: &'a SeedBook,
    round: u64,
    params: FieldParams,
    streams: BTreeMap<usize, PairMaskStream>,
}

impl<'a> PartyMasker<'a> {
    pub fn new(party: usize, seeds: &'a SeedBook, round: u64, params: FieldParams) -> Self {
        Self {
            party,
            seeds,
            round,
            params,
            streams: BTreeMap::new(),
        }
    }

    pub fn mask(&mut self, encoded: &FieldVector, roster: &[usize], item: u64) -> Result<FieldVector> {
        let mut out = encoded.clone();
        for &other in roster {
            if other == self.party {
                continue;
            }
            let stream = match self.streams.entry(other) {
                Entry::Occupied(e) => e.into_mut(),
                Entry::Vacant(e) => {
                    let seed = self.seeds.get(&other).ok_or(Error::MissingPairSeed {
                        low: self.party.min(other),
                        high: self.party.max(other),
                    })?;
                    e.insert(PairMaskStream::new(seed, self.round))
                }
            };
            stream.add_into(item, &mut out.0, self.party < other, &self.params);
        }
        Ok(out)
    }
}
