use std::collections::BTreeSet;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::field::FieldParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShamirShare {
    pub owner: usize,
    pub x: u64,
    pub y: u64,
    pub threshold: usize,
    pub secret_id: u64,
}

/// Coefficients of a degree `t - 1` polynomial whose constant term is the secret.
#[derive(Debug, Clone)]
pub struct Polynomial {
    coefficients: Vec<u64>,
}

impl Polynomial {
    pub fn random<R: RngCore>(secret: u64, threshold: usize, params: &FieldParams, rng: &mut R) -> Self {
        let mut coefficients = Vec::with_capacity(threshold);
        coefficients.push(secret % params.prime);
        for _ in 1..threshold {
            coefficients.push(params.random(rng));
        }
        Self { coefficients }
    }

    /// Horner evaluation.
    pub fn eval(&self, x: u64, params: &FieldParams) -> u64 {
        self.coefficients
            .iter()
            .rev()
            .fold(0, |acc, c| params.add(params.mul(acc, x), *c))
    }

    pub fn threshold(&self) -> usize {
        self.coefficients.len()
    }
}

/// Splits `secret` into `n` shares for owners `0..n` at points `x = owner + 1`.
pub fn shamir_split<R: RngCore>(
    secret: u64,
    n: usize,
    threshold: usize,
    secret_id: u64,
    params: &FieldParams,
    rng: &mut R,
) -> Result<Vec<ShamirShare>> {
    if threshold == 0 || threshold > n {
        return Err(Error::Sharing(format!("threshold {threshold} must be in 1..={n}")));
    }
    if n as u64 >= params.prime {
        return Err(Error::Sharing("more parties than nonzero field points".into()));
    }
    let poly = Polynomial::random(secret, threshold, params, rng);
    Ok((0..n)
        .map(|owner| {
            let x = owner as u64 + 1;
            ShamirShare {
                owner,
                x,
                y: poly.eval(x, params),
                threshold,
                secret_id,
            }
        })
        .collect())
}

/// Lagrange interpolation at `x = 0`.
pub fn shamir_reconstruct(shares: &[ShamirShare], params: &FieldParams) -> Result<u64> {
    let first = shares.first().ok_or_else(|| Error::Sharing("no shares".into()))?;
    if shares.iter().any(|s| s.secret_id != first.secret_id) {
        return Err(Error::Sharing("shares belong to different secrets".into()));
    }
    if shares.len() < first.threshold {
        return Err(Error::Sharing(format!(
            "{} shares below threshold {}",
            shares.len(),
            first.threshold
        )));
    }
    let mut seen = BTreeSet::new();
    for s in shares {
        if s.x % params.prime == 0 || !seen.insert(s.x) {
            return Err(Error::Sharing(format!("duplicate or zero share point x = {}", s.x)));
        }
    }
    let mut secret = 0;
    for (j, sj) in shares.iter().enumerate() {
        let mut num = 1;
        let mut den = 1;
        for (m, sm) in shares.iter().enumerate() {
            if m != j {
                num = params.mul(num, sm.x);
                den = params.mul(den, params.sub(sm.x, sj.x));
            }
        }
        let basis = params.mul(num, params.inv(den)?);
        secret = params.add(secret, params.mul(sj.y, basis));
    }
    Ok(secret)
}

pub const SEED_LIMBS: usize = 3;
const LIMB_BITS: u32 = 48;

/// Cuts a 128-bit seed into field-sized limbs (48, 48 and 32 bits).
pub fn seed_limbs(seed: u128) -> [u64; SEED_LIMBS] {
    let mask = (1u128 << LIMB_BITS) - 1;
    [
        (seed & mask) as u64,
        ((seed >> LIMB_BITS) & mask) as u64,
        (seed >> (2 * LIMB_BITS)) as u64,
    ]
}

pub fn seed_from_limbs(limbs: [u64; SEED_LIMBS]) -> u128 {
    limbs[0] as u128 | (limbs[1] as u128) << LIMB_BITS | (limbs[2] as u128) << (2 * LIMB_BITS)
}
