//! Matrix factorization primitives.
//!
//! A rating is approximated by the dot product of a user vector `p_u` and an
//! item vector `q_i`. Everything here is a pure function over slices; the
//! federated loop in [`crate::fedsim`] decides who owns which vector.

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::RatingTriple;
use crate::error::{Error, Result};

/// Dense user and item factor matrices, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentFactors {
    pub k: usize,
    pub n_users: usize,
    pub n_items: usize,
    user_factors: Vec<f64>,
    item_factors: Vec<f64>,
}

impl LatentFactors {
    pub fn zeros(n_users: usize, n_items: usize, k: usize) -> Self {
        assert!(k >= 1, "latent dimension must be at least 1");
        Self {
            k,
            n_users,
            n_items,
            user_factors: vec![0.0; n_users * k],
            item_factors: vec![0.0; n_items * k],
        }
    }

    /// Uniform(-0.01/sqrt(k), 0.01/sqrt(k)) initialization; users first, then items.
    pub fn random<R: Rng>(n_users: usize, n_items: usize, k: usize, rng: &mut R) -> Self {
        let mut factors = Self::zeros(n_users, n_items, k);
        let bound = init_bound(k);
        for v in factors.user_factors.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        for v in factors.item_factors.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        factors
    }

    pub fn user(&self, u: usize) -> &[f64] {
        &self.user_factors[u * self.k..(u + 1) * self.k]
    }

    pub fn user_mut(&mut self, u: usize) -> &mut [f64] {
        &mut self.user_factors[u * self.k..(u + 1) * self.k]
    }

    pub fn item(&self, i: usize) -> &[f64] {
        &self.item_factors[i * self.k..(i + 1) * self.k]
    }

    pub fn item_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.item_factors[i * self.k..(i + 1) * self.k]
    }

    pub fn item_matrix(&self) -> &[f64] {
        &self.item_factors
    }

    pub fn user_matrix(&self) -> &[f64] {
        &self.user_factors
    }

    pub fn is_finite(&self) -> bool {
        self.user_factors
            .iter()
            .chain(self.item_factors.iter())
            .all(|v| v.is_finite())
    }

    /// Writes a CSV checkpoint: a header row `n_users,n_items,k,epoch,seed`,
    /// its values, then one `side,index,f0..` row per vector.
    pub fn write_checkpoint<W: Write>(&self, mut out: W, epoch: usize, seed: u64) -> Result<()> {
        writeln!(out, "n_users,n_items,k,epoch,seed")?;
        writeln!(out, "{},{},{},{},{}", self.n_users, self.n_items, self.k, epoch, seed)?;
        let header: Vec<String> = (0..self.k).map(|j| format!("f{j}")).collect();
        writeln!(out, "side,index,{}", header.join(","))?;
        for (side, rows, matrix) in [
            ("user", self.n_users, &self.user_factors),
            ("item", self.n_items, &self.item_factors),
        ] {
            for r in 0..rows {
                let row = &matrix[r * self.k..(r + 1) * self.k];
                let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(out, "{side},{r},{}", cells.join(","))?;
            }
        }
        Ok(())
    }

    /// Reads a checkpoint written by [`LatentFactors::write_checkpoint`],
    /// returning the factors together with `(epoch, seed)`.
    pub fn read_checkpoint<R: BufRead>(input: R) -> Result<(Self, usize, u64)> {
        let bad = |line: usize, message: &str| Error::Parse {
            path: "<checkpoint>".into(),
            line,
            message: message.to_string(),
        };
        let mut lines = input.lines();
        let _ = lines.next().ok_or_else(|| bad(1, "missing header"))??;
        let meta = lines.next().ok_or_else(|| bad(2, "missing metadata"))??;
        let meta: Vec<&str> = meta.split(',').collect();
        if meta.len() != 5 {
            return Err(bad(2, "expected 5 metadata fields"));
        }
        let parse_usize = |s: &str| s.trim().parse::<usize>().map_err(|_| bad(2, "bad integer"));
        let n_users = parse_usize(meta[0])?;
        let n_items = parse_usize(meta[1])?;
        let k = parse_usize(meta[2])?;
        let epoch = parse_usize(meta[3])?;
        let seed = meta[4].trim().parse::<u64>().map_err(|_| bad(2, "bad seed"))?;
        if k == 0 {
            return Err(bad(2, "k must be at least 1"));
        }
        let _ = lines.next().ok_or_else(|| bad(3, "missing column header"))??;
        let mut factors = Self::zeros(n_users, n_items, k);
        let mut seen = 0usize;
        for (n, line) in lines.enumerate() {
            let line_no = n + 4;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != k + 2 {
                return Err(bad(line_no, "wrong number of columns"));
            }
            let index: usize = cells[1].parse().map_err(|_| bad(line_no, "bad index"))?;
            let row = match cells[0] {
                "user" if index < n_users => factors.user_mut(index),
                "item" if index < n_items => factors.item_mut(index),
                _ => return Err(bad(line_no, "unknown side or index out of range")),
            };
            for (slot, cell) in row.iter_mut().zip(&cells[2..]) {
                *slot = cell.parse().map_err(|_| bad(line_no, "bad float"))?;
            }
            seen += 1;
        }
        if seen != n_users + n_items {
            return Err(bad(0, "checkpoint is missing rows"));
        }
        Ok((factors, epoch, seed))
    }
}

pub fn init_bound(k: usize) -> f64 {
    0.01 / (k as f64).sqrt()
}

/// Training hyperparameters shared by all federated MF variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub k: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            k: 16,
            gamma: 0.01,
            lambda: 0.1,
            epochs: 100,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("hyperparams.k", "must be at least 1"));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::config("hyperparams.gamma", "must be finite and non-negative"));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::config("hyperparams.lambda", "must be finite and non-negative"));
        }
        if self.epochs == 0 {
            return Err(Error::config("hyperparams.epochs", "must be at least 1"));
        }
        Ok(())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `q_i^T p_u`.
pub fn predict(p_u: &[f64], q_i: &[f64]) -> Result<f64> {
    if p_u.len() != q_i.len() {
        return Err(Error::DimensionMismatch {
            expected: p_u.len(),
            got: q_i.len(),
        });
    }
    Ok(dot(p_u, q_i))
}

/// Regularized squared loss with the penalty counted once per known pair:
/// `1/2 * sum (r - q^T p)^2 + lambda * (|q_i|^2 + |p_u|^2)` summed over pairs.
pub fn loss(ratings: &[RatingTriple], factors: &LatentFactors, lambda: f64) -> f64 {
    ratings
        .iter()
        .map(|t| {
            let p = factors.user(t.user_id);
            let q = factors.item(t.item_id);
            let e = t.rating - dot(p, q);
            0.5 * e * e + lambda * (dot(q, q) + dot(p, p))
        })
        .sum()
}

/// Item gradient `lambda * q_i - e_ui * p_u`.
pub fn item_gradient(q_i: &[f64], p_u: &[f64], e_ui: f64, lambda: f64) -> Vec<f64> {
    q_i.iter().zip(p_u).map(|(q, p)| lambda * q - e_ui * p).collect()
}

/// One descent step on the user vector summed over all rated items:
/// `p <- p - gamma * sum_i (lambda * p - e_ui * q_i)`.
///
/// `rated` must already be in ascending item order; the sum is accumulated in
/// the order given.
pub fn update_user(p_u: &[f64], rated: &[(&[f64], f64)], gamma: f64, lambda: f64) -> Vec<f64> {
    let mut grad = vec![0.0; p_u.len()];
    for (q_i, e_ui) in rated {
        for ((g, p), q) in grad.iter_mut().zip(p_u).zip(q_i.iter()) {
            *g += lambda * p - e_ui * q;
        }
    }
    p_u.iter().zip(&grad).map(|(p, g)| p - gamma * g).collect()
}

/// RMSE and MAE pooled over every (prediction, truth) pair.
pub fn rmse_mae(predictions: &[f64], truths: &[f64]) -> Result<(f64, f64)> {
    if predictions.is_empty() {
        return Err(Error::Empty("prediction set".into()));
    }
    if predictions.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            expected: truths.len(),
            got: predictions.len(),
        });
    }
    let n = predictions.len() as f64;
    let (se, ae) = predictions.iter().zip(truths).fold((0.0, 0.0), |(se, ae), (p, t)| {
        let d = p - t;
        (se + d * d, ae + d.abs())
    });
    Ok(((se / n).sqrt(), ae / n))
}
