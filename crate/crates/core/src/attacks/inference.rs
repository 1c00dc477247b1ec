use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack on the acceptance comparisons so that rounding in the rescale
/// cannot flip a rating that sits exactly on the boundary.
const EPS: f64 = 1e-9;

/// Affinely maps `masked` onto `[min, max]`. Constant input maps to the
/// midpoint.
pub fn rescale_to_range(masked: &[f64], min: f64, max: f64) -> Vec<f64> {
    let lo = masked.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = masked.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return vec![0.5 * (min + max); masked.len()];
    }
    masked
        .iter()
        .map(|m| min + (m - lo) / (hi - lo) * (max - min))
        .collect()
}

/// Recovery rate at each error level: the adversary rescales the party's
/// masked ratings to its known `[min, max]` rating range and a rating counts
/// as recovered at level `g` when the guess is within `g * step` of it.
pub fn recovery_attack(masked: &[f64], original: &[f64], step: f64, error_levels: &[f64]) -> Result<Vec<f64>> {
    if masked.len() != original.len() {
        return Err(Error::DimensionMismatch {
            expected: original.len(),
            got: masked.len(),
        });
    }
    if masked.is_empty() {
        return Err(Error::Empty("party ratings".into()));
    }
    let min = original.iter().copied().fold(f64::INFINITY, f64::min);
    let max = original.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let guesses = rescale_to_range(masked, min, max);
    let errors: Vec<f64> = guesses.iter().zip(original).map(|(g, r)| (g - r).abs()).collect();
    Ok(error_levels
        .iter()
        .map(|&g| errors.iter().filter(|&&e| e <= g * step + EPS).count() as f64 / errors.len() as f64)
        .collect())
}

/// Size of the top-`h` set of `n` items; zero means the party cannot be
/// attacked at this `h`.
pub fn top_count(n: usize, h: f64) -> usize {
    (h * n as f64 + EPS).floor() as usize
}

/// Items of the top `count` values, ties broken by ascending item id.
fn top_items(values: &[f64], items: &[usize], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(items[a].cmp(&items[b])));
    let mut top: Vec<usize> = order[..count].iter().map(|&n| items[n]).collect();
    top.sort_unstable();
    top
}

/// Hit ratio of the top-`h` masked items against the true top-`h` items, or
/// `None` when the party has too few items for a nonempty top set.
pub fn ranking_attack(masked: &[f64], original: &[f64], items: &[usize], h: f64) -> Result<Option<f64>> {
    if masked.len() != original.len() || items.len() != original.len() {
        return Err(Error::DimensionMismatch {
            expected: original.len(),
            got: masked.len().min(items.len()),
        });
    }
    if !(h > 0.0 && h <= 1.0) {
        return Err(Error::InvalidInput(format!("top proportion {h} must be in (0, 1]")));
    }
    let count = top_count(items.len(), h);
    if count == 0 {
        return Ok(None);
    }
    let guessed = top_items(masked, items, count);
    let truth = top_items(original, items, count);
    let hits = guessed.iter().filter(|i| truth.binary_search(i).is_ok()).count();
    Ok(Some(hits as f64 / truth.len() as f64))
}

/// One party's masked ratings next to the originals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartyRatings {
    pub party_id: usize,
    pub items: Vec<usize>,
    pub masked: Vec<f64>,
    pub original: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartyAttack {
    pub party_id: usize,
    pub n_items: usize,
    /// One recovery rate per error level.
    pub alphas: Vec<f64>,
    /// One hit ratio per top proportion; `None` when not attackable.
    pub betas: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

/// Distribution of a rate over parties, in ten bins of width 0.1; the last
/// bin includes 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub measure: String,
    pub bins: Vec<HistogramBin>,
    pub total: usize,
}

impl Histogram {
    pub const BINS: usize = 10;

    pub fn from_rates(measure: impl Into<String>, rates: impl IntoIterator<Item = f64>) -> Self {
        let mut bins: Vec<HistogramBin> = (0..Self::BINS)
            .map(|b| HistogramBin {
                low: b as f64 / Self::BINS as f64,
                high: (b + 1) as f64 / Self::BINS as f64,
                count: 0,
            })
            .collect();
        let mut total = 0;
        for rate in rates {
            let b = ((rate * Self::BINS as f64 + EPS).floor() as usize).min(Self::BINS - 1);
            bins[b].count += 1;
            total += 1;
        }
        Self {
            measure: measure.into(),
            bins,
            total,
        }
    }

    pub fn proportions(&self) -> Vec<f64> {
        self.bins
            .iter()
            .map(|b| {
                if self.total == 0 {
                    0.0
                } else {
                    b.count as f64 / self.total as f64
                }
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin_low", "bin_high", "proportion"])?;
        for (bin, p) in self.bins.iter().zip(self.proportions()) {
            w.write_record([format!("{:.1}", bin.low), format!("{:.1}", bin.high), p.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub error_levels: Vec<f64>,
    pub top_proportions: Vec<f64>,
    pub parties: Vec<PartyAttack>,
}

impl AttackReport {
    /// Share of parties whose recovery rate at level index `g` exceeds
    /// `above`.
    pub fn fraction_alpha_above(&self, g: usize, above: f64) -> f64 {
        let n = self.parties.len();
        if n == 0 {
            return 0.0;
        }
        self.parties.iter().filter(|p| p.alphas[g] > above).count() as f64 / n as f64
    }

    /// Share of attackable parties whose hit ratio at index `h` is at least
    /// `at_least`.
    pub fn fraction_beta_at_least(&self, h: usize, at_least: f64) -> f64 {
        let rates: Vec<f64> = self.parties.iter().filter_map(|p| p.betas[h]).collect();
        if rates.is_empty() {
            return 0.0;
        }
        rates.iter().filter(|&&b| b >= at_least).count() as f64 / rates.len() as f64
    }

    pub fn alpha_column(g: f64) -> String {
        format!("alpha_g{g}")
    }

    pub fn beta_column(h: f64) -> String {
        format!("beta_h{h}")
    }

    /// One histogram per error level, then one per top proportion (over
    /// attackable parties only).
    pub fn histograms(&self) -> Vec<Histogram> {
        let alphas = self
            .error_levels
            .iter()
            .enumerate()
            .map(|(n, &g)| Histogram::from_rates(Self::alpha_column(g), self.parties.iter().map(|p| p.alphas[n])));
        let betas =
            self.top_proportions.iter().enumerate().map(|(n, &h)| {
                Histogram::from_rates(Self::beta_column(h), self.parties.iter().filter_map(|p| p.betas[n]))
            });
        alphas.chain(betas).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["party_id".to_string(), "n_items".to_string()];
        header.extend(self.error_levels.iter().map(|&g| Self::alpha_column(g)));
        header.extend(self.top_proportions.iter().map(|&h| Self::beta_column(h)));
        w.write_record(&header)?;
        for p in &self.parties {
            let mut row = vec![p.party_id.to_string(), p.n_items.to_string()];
            row.extend(p.alphas.iter().map(f64::to_string));
            row.extend(p.betas.iter().map(|b| b.map_or_else(String::new, |b| b.to_string())));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs both attacks on every party.
pub fn attack_report(
    parties: &[PartyRatings],
    step: f64,
    error_levels: &[f64],
    top_proportions: &[f64],
) -> Result<AttackReport> {
    if let Some(g) = error_levels.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
        return Err(Error::InvalidInput(format!(
            "error level {g} must be finite and nonnegative"
        )));
    }
    let parties = parties
        .iter()
        .filter(|p| !p.items.is_empty())
        .map(|p| {
            Ok(PartyAttack {
                party_id: p.party_id,
                n_items: p.items.len(),
                alphas: recovery_attack(&p.masked, &p.original, step, error_levels)?,
                betas: top_proportions
                    .iter()
                    .map(|&h| ranking_attack(&p.masked, &p.original, &p.items, h))
                    .collect::<Result<_>>()?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(AttackReport {
        error_levels: error_levels.to_vec(),
        top_proportions: top_proportions.to_vec(),
        parties,
    })
}
