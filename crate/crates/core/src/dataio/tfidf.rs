use std::collections::BTreeMap;

use super::FeatureVector;
use crate::error::{Error, Result};

/// TF-IDF weights for a tag corpus.
///
/// `tf = count / entity tag total`, `idf = ln(N / df)` with `N` the number of
/// entities in the corpus (including those with no tags) and `df` the number
/// of entities carrying the tag. No smoothing: a tag on every entity weighs 0.
pub fn tfidf(
    tag_occurrences: &BTreeMap<usize, Vec<usize>>,
    vocabulary_size: usize,
) -> Result<BTreeMap<usize, FeatureVector>> {
    if tag_occurrences.is_empty() {
        return Err(Error::Empty("tag corpus".into()));
    }
    let n_entities = tag_occurrences.len() as f64;
    let mut document_frequency = vec![0usize; vocabulary_size];
    let mut counts: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (&entity, tags) in tag_occurrences {
        let mut row = vec![0.0; vocabulary_size];
        for &t in tags {
            if t >= vocabulary_size {
                return Err(Error::InvalidInput(format!(
                    "tag id {t} outside vocabulary of size {vocabulary_size}"
                )));
            }
            row[t] += 1.0;
        }
        for (t, c) in row.iter().enumerate() {
            if *c > 0.0 {
                document_frequency[t] += 1;
            }
        }
        counts.insert(entity, row);
    }
    let idf: Vec<f64> = document_frequency
        .iter()
        .map(|&df| if df == 0 { 0.0 } else { (n_entities / df as f64).ln() })
        .collect();
    Ok(counts
        .into_iter()
        .map(|(entity, row)| {
            let total: f64 = row.iter().sum();
            let values = if total == 0.0 {
                row
            } else {
                row.iter().zip(&idf).map(|(c, w)| c / total * w).collect()
            };
            (
                entity,
                FeatureVector {
                    entity_id: entity,
                    values,
                },
            )
        })
        .collect())
}
