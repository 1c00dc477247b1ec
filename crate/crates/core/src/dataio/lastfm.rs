use std::collections::BTreeMap;
use std::path::Path;

use super::movielens::{attach_tag_features, read_latin1};
use super::{Dataset, FeatureOptions, RatingScale};
use crate::error::{Error, Result};

/// Global equal-frequency binning of counts into `1..=n_bins`.
///
/// A count's bin is decided by how many counts are strictly smaller than it,
/// so tied counts all land in the lowest bin their block reaches.
pub fn quantile_bins(counts: &[f64], n_bins: usize) -> Vec<u32> {
    let mut sorted = counts.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    counts
        .iter()
        .map(|c| {
            let below = sorted.partition_point(|s| s < c);
            (below * n_bins / n) as u32 + 1
        })
        .collect()
}

/// Parses `user_artists.dat` (`userID \t artistID \t weight`, optional header)
/// and converts listening counts to ratings `1..=n_bins`.
pub fn parse_lastfm(path: &Path, n_bins: usize) -> Result<Dataset> {
    if n_bins < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 bins, got {n_bins}")));
    }
    let text = read_latin1(path)?;
    let mut triples = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if line_no == 1 && fields[0].parse::<u64>().is_err() {
            continue;
        }
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        if fields.len() != 3 {
            return Err(bad(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let user: u64 = fields[0].trim().parse().map_err(|_| bad("bad user id".into()))?;
        let artist: u64 = fields[1].trim().parse().map_err(|_| bad("bad artist id".into()))?;
        let count: f64 = fields[2].trim().parse().map_err(|_| bad("bad count".into()))?;
        if !(count > 0.0) || !count.is_finite() {
            return Err(bad(format!("listening count must be positive, got {count}")));
        }
        triples.push((user, artist, count));
    }
    if triples.is_empty() {
        return Err(Error::Empty(path.display().to_string()));
    }
    let counts: Vec<f64> = triples.iter().map(|t| t.2).collect();
    let bins = quantile_bins(&counts, n_bins);
    let raw = triples
        .iter()
        .zip(bins)
        .map(|(&(u, i, _), b)| (u, i, b as f64))
        .collect();
    let scale = RatingScale::new(1.0, n_bins as f64, 1.0)?;
    Dataset::from_raw("lastfm", raw, scale)
}

/// Loads a LastFM directory: `user_artists.dat` plus, when present,
/// `user_taggedartists.dat` whose tag assignments feed both the tagging
/// user's and the tagged artist's TF-IDF vectors.
pub fn load_lastfm(dir: &Path, n_bins: usize, opts: FeatureOptions) -> Result<Dataset> {
    let ratings = dir.join("user_artists.dat");
    if !ratings.is_file() {
        return Err(Error::MissingFiles(format!(
            "{} (expected layout for lastfm: user_artists.dat [, user_taggedartists.dat])",
            ratings.display()
        )));
    }
    let mut dataset = parse_lastfm(&ratings, n_bins)?;
    let mut users: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    let mut items: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    let tagged = dir.join("user_taggedartists.dat");
    if tagged.is_file() {
        for (n, line) in read_latin1(&tagged)?.lines().enumerate() {
            let fields: Vec<&str> = line.split('\t').collect();
            if line.trim().is_empty() || (n == 0 && fields[0].parse::<u64>().is_err()) {
                continue;
            }
            let bad = || Error::Parse {
                path: tagged.clone(),
                line: n + 1,
                message: "expected userID, artistID, tagID, ...".into(),
            };
            if fields.len() < 3 {
                return Err(bad());
            }
            let user: u64 = fields[0].trim().parse().map_err(|_| bad())?;
            let artist: u64 = fields[1].trim().parse().map_err(|_| bad())?;
            let tag = format!("tag:{}", fields[2].trim());
            if let Ok(d) = dataset.user_ids.binary_search(&user) {
                users.entry(d).or_default().push(tag.clone());
            }
            if let Ok(d) = dataset.item_ids.binary_search(&artist) {
                items.entry(d).or_default().push(tag);
            }
        }
    }
    attach_tag_features(&mut dataset, users, items, opts)?;
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    #[test]
    fn five_distinct_counts_fill_five_bins() {
        // Oracle: with 5 distinct values and 5 bins each value is its own
        // quantile, so ranks 0..4 map to bins 1..5.
        assert_eq!(
            quantile_bins(&[1.0, 10.0, 100.0, 1000.0, 10000.0], 5),
            vec![1, 2, 3, 4, 5]
        );
        assert_eq!(
            quantile_bins(&[1000.0, 1.0, 10000.0, 10.0, 100.0], 5),
            vec![4, 1, 5, 2, 3]
        );
    }

    #[test]
    fn identical_counts_take_lowest_bin() {
        assert_eq!(quantile_bins(&[7.0; 6], 5), vec![1; 6]);
    }

    proptest! {
        #[test]
        fn binning_is_monotone_and_in_range(counts in proptest::collection::vec(1.0f64..1e5, 1..200)) {
            let bins = quantile_bins(&counts, 5);
            for (a, ba) in counts.iter().zip(&bins) {
                prop_assert!((1..=5).contains(ba));
                for (b, bb) in counts.iter().zip(&bins) {
                    if a <= b {
                        prop_assert!(ba <= bb);
                    }
                }
            }
        }
    }

    #[test]
    fn parse_rejects_non_positive_counts() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("user_artists.dat");
        std::fs::File::create(&p)
            .unwrap()
            .write_all(b"userID\tartistID\tweight\n2\t51\t13883\n2\t52\t0\n")
            .unwrap();
        assert!(matches!(parse_lastfm(&p, 5), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn parse_maps_counts_to_one_through_five() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("user_artists.dat");
        let mut body = String::from("userID\tartistID\tweight\n");
        for u in 0..4 {
            for a in 0..10 {
                body.push_str(&format!("{}\t{}\t{}\n", u + 2, a + 50, (u * 37 + a * 101) % 997 + 1));
            }
        }
        std::fs::write(&p, body).unwrap();
        let d = parse_lastfm(&p, 5).unwrap();
        assert!(d
            .ratings
            .iter()
            .all(|t| (1.0..=5.0).contains(&t.rating) && t.rating.fract() == 0.0));
        assert!(d.ratings.iter().any(|t| t.rating == 1.0) && d.ratings.iter().any(|t| t.rating == 5.0));
    }
}
