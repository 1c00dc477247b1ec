use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2^61 - 1.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldParams {
    pub prime: u64,
    /// Fixed-point scale is `2^scale_bits`.
    pub scale_bits: u32,
    /// Largest number of encodings that may ever be summed; sizes the clamp
    /// so that a true sum never wraps past `l / 2`.
    pub max_summands: u64,
}

impl Default for FieldParams {
    fn default() -> Self {
        Self {
            prime: MERSENNE_61,
            scale_bits: 20,
            max_summands: 1_000_000,
        }
    }
}

impl FieldParams {
    pub fn scale(&self) -> f64 {
        (1u64 << self.scale_bits) as f64
    }

    /// Largest fixed-point magnitude one encoding may carry, chosen so that
    /// `max_summands` of them never sum past `(l - 1) / 2`.
    pub fn max_encoded(&self) -> u64 {
        (self.prime - 1) / 2 / self.max_summands.max(1)
    }

    /// Largest magnitude a single value may have.
    pub fn clamp(&self) -> f64 {
        self.max_encoded() as f64 / self.scale()
    }

    /// Worst-case decode error of one encoding.
    pub fn quantum(&self) -> f64 {
        0.5 / self.scale()
    }

    pub fn validate(&self) -> Result<()> {
        if self.prime < 3 || self.prime >= 1 << 63 || !is_prime(self.prime) {
            return Err(Error::config(
                "prime",
                format!("{} is not an odd prime below 2^63", self.prime),
            ));
        }
        if self.scale_bits == 0 || self.scale_bits > 40 {
            return Err(Error::config("scale_bits", "must be in 1..=40"));
        }
        if self.max_summands == 0 || self.clamp() < 1.0 {
            return Err(Error::config(
                "max_summands",
                "leaves no headroom: the encodable magnitude would fall below 1",
            ));
        }
        Ok(())
    }

    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.prime {
            s - self.prime
        } else {
            s
        }
    }

    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.prime - b
        }
    }

    pub fn mul(&self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.prime as u128) as u64
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse by Fermat's little theorem.
    pub fn inv(&self, a: u64) -> Result<u64> {
        if a.is_multiple_of(self.prime) {
            return Err(Error::Sharing("zero has no inverse".into()));
        }
        Ok(self.pow(a, self.prime - 2))
    }

    /// Uniform element of `[0, l)` by rejection sampling.
    pub fn random<R: RngCore>(&self, rng: &mut R) -> u64 {
        let mask = self.prime.next_power_of_two() - 1;
        loop {
            let v = rng.next_u64() & mask;
            if v < self.prime {
                return v;
            }
        }
    }
}

fn is_prime(n: u64) -> bool {
    // deterministic Miller-Rabin for 64-bit inputs
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let f = FieldParams {
        prime: n,
        ..Default::default()
    };
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = f.pow(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = f.mul(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Entries in `[0, l)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldVector(pub Vec<u64>);

impl FieldVector {
    pub fn zeros(k: usize) -> Self {
        Self(vec![0; k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn add_assign(&mut self, other: &FieldVector, params: &FieldParams) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a = params.add(*a, *b);
        }
    }

    pub fn sub_assign(&mut self, other: &FieldVector, params: &FieldParams) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a = params.sub(*a, *b);
        }
    }
}

/// `round(v * scale) mod l`; refuses values whose magnitude exceeds the clamp.
pub fn encode(values: &[f64], params: &FieldParams) -> Result<FieldVector> {
    let scale = params.scale();
    let limit = params.max_encoded();
    values
        .iter()
        .map(|&v| {
            let scaled = (v * scale).round();
            if !(scaled.abs() <= limit as f64) || scaled.abs() as u64 > limit {
                return Err(Error::EncodeOverflow {
                    value: v,
                    clamp: params.clamp(),
                });
            }
            let q = scaled as i64;
            Ok(if q >= 0 {
                q as u64 % params.prime
            } else {
                params.prime - (q.unsigned_abs() % params.prime)
            })
        })
        .collect::<Result<Vec<_>>>()
        .map(FieldVector)
}

/// Inverse of [`encode`] for sums of encodings: the upper half of the field
/// is read as negative.
pub fn decode(fv: &FieldVector, params: &FieldParams) -> Vec<f64> {
    let half = params.prime / 2 + 1;
    let scale = params.scale();
    fv.0.iter()
        .map(|&x| {
            if x >= half {
                -((params.prime - x) as f64) / scale
            } else {
                x as f64 / scale
            }
        })
        .collect()
}
