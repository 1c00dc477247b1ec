use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{PartySplit, RatingTriple};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) || ((parts.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::config("split", "ratios must be in [0, 1] and sum to 1"));
        }
        Ok(())
    }
}

/// Splits one user's ratings. The shuffle is keyed by `(seed, user_id)` so a
/// user's split does not depend on any other user. Users with fewer than 3
/// ratings keep everything in train; users with at least 5 always get a
/// validation rating.
pub fn split_party(ratings: &[RatingTriple], ratios: SplitRatios, seed: u64) -> PartySplit {
    let user_id = ratings.first().map_or(0, |t| t.user_id);
    debug_assert!(ratings.iter().all(|t| t.user_id == user_id));
    let mut shuffled = ratings.to_vec();
    shuffled.sort_by_key(|t| t.item_id);
    let n = shuffled.len();
    if n < 3 {
        return PartySplit {
            user_id,
            train: shuffled,
            validation: Vec::new(),
            test: Vec::new(),
        };
    }
    shuffled.shuffle(&mut rng::stream(seed, "split", user_id as u64));

    let portion = |ratio: f64| (n as f64 * ratio).round() as usize;
    let mut n_val = portion(ratios.validation);
    let mut n_test = portion(ratios.test);
    if n >= 5 && ratios.validation > 0.0 {
        n_val = n_val.max(1);
    }
    if ratios.test > 0.0 {
        n_test = n_test.max(1);
    }
    while n_val + n_test >= n {
        if n_test > n_val {
            n_test -= 1;
        } else {
            n_val -= 1;
        }
    }
    let n_train = n - n_val - n_test;
    let take = |count: usize, from: usize| {
        let mut part = shuffled[from..from + count].to_vec();
        part.sort_by_key(|t| t.item_id);
        part
    };
    let train = take(n_train, 0);
    let validation = take(n_val, n_train);
    let test = take(n_test, n_train + n_val);
    PartySplit {
        user_id,
        train,
        validation,
        test,
    }
}
