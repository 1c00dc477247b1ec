//! The three raw formats parse into the same dataset shape. Expected counts
//! come from re-reading the fixture files with plain string handling.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use fedmmf::dataio::{load_lastfm, load_movielens, Dataset, FeatureOptions, MovieLensFormat};
use fedmmf::Error;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// `(user, item, value)` rows of a delimited file, skipping a header whose
/// first field is not numeric.
fn raw_rows(path: &Path, sep: &str) -> Vec<(u64, u64, f64)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .filter_map(|l| {
            let f: Vec<&str> = l.split(sep).collect();
            Some((
                f[0].trim().parse().ok()?,
                f[1].trim().parse().ok()?,
                f[2].trim().parse().ok()?,
            ))
        })
        .collect()
}

fn check_against_raw(dataset: &Dataset, raw: &[(u64, u64, f64)], rating_of: impl Fn(&(u64, u64, f64)) -> f64) {
    let users: BTreeSet<u64> = raw.iter().map(|r| r.0).collect();
    let items: BTreeSet<u64> = raw.iter().map(|r| r.1).collect();
    assert_eq!(dataset.ratings.len(), raw.len());
    assert_eq!(dataset.n_users, users.len());
    assert_eq!(dataset.n_items, items.len());
    assert_eq!(dataset.user_ids, users.into_iter().collect::<Vec<_>>());
    assert_eq!(dataset.item_ids, items.into_iter().collect::<Vec<_>>());

    let parsed: BTreeMap<(u64, u64), f64> = dataset
        .ratings
        .iter()
        .map(|t| ((dataset.user_ids[t.user_id], dataset.item_ids[t.item_id]), t.rating))
        .collect();
    for row in raw {
        assert_eq!(parsed[&(row.0, row.1)], rating_of(row), "rating of {row:?}");
    }
    dataset.validate().unwrap();
    assert_eq!(dataset.user_features.len(), dataset.n_users);
    assert_eq!(dataset.item_features.len(), dataset.n_items);
    for f in dataset.user_features.iter().chain(&dataset.item_features) {
        assert!(f.values.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn movielens_100k_sample() {
    let dir = fixture("ml-100k-sample");
    let d = load_movielens(&dir, MovieLensFormat::Ml100k, FeatureOptions { pca_dim: 4 }).unwrap();
    let raw = raw_rows(&dir.join("u.data"), "\t");
    assert_eq!(raw.len(), 787);
    check_against_raw(&d, &raw, |r| r.2);
    assert_eq!((d.scale.min, d.scale.max, d.scale.step), (1.0, 5.0, 1.0));
    assert_eq!(d.item_feature_dim(), 4);
    assert_eq!(d.user_feature_dim(), 4);
}

#[test]
fn movielens_10m_sample() {
    let dir = fixture("ml-10m-sample");
    let d = load_movielens(&dir, MovieLensFormat::Ml10m, FeatureOptions { pca_dim: 3 }).unwrap();
    let raw = raw_rows(&dir.join("ratings.dat"), "::");
    assert_eq!(raw.len(), 117);
    check_against_raw(&d, &raw, |r| r.2);
    assert_eq!((d.scale.min, d.scale.max, d.scale.step), (0.5, 5.0, 0.5));
    assert!(raw.iter().any(|r| r.2.fract() == 0.5), "fixture exercises half stars");
    assert_eq!(d.item_feature_dim(), 3);

    // "(no genres listed)" is a placeholder, not a genre; such movies load
    let genres = fs::read_to_string(dir.join("movies.dat")).unwrap();
    let no_genre: Vec<u64> = genres
        .lines()
        .filter(|l| l.ends_with("(no genres listed)"))
        .map(|l| l.split("::").next().unwrap().parse().unwrap())
        .collect();
    assert!(!no_genre.is_empty());
    assert!(no_genre.iter().all(|id| d.item_ids.contains(id)));
}

#[test]
fn movielens_10m_without_side_files() {
    let tmp = tempfile::tempdir().unwrap();
    fs::copy(fixture("ml-10m-sample/ratings.dat"), tmp.path().join("ratings.dat")).unwrap();
    let d = load_movielens(tmp.path(), MovieLensFormat::Ml10m, FeatureOptions { pca_dim: 3 }).unwrap();
    assert_eq!(d.ratings.len(), 117);
    assert!(d.item_features.iter().all(|f| f.values == vec![0.0; 3]));
}

#[test]
fn lastfm_sample() {
    let dir = fixture("lastfm-sample");
    let d = load_lastfm(&dir, 5, FeatureOptions { pca_dim: 3 }).unwrap();
    let raw = raw_rows(&dir.join("user_artists.dat"), "\t");
    assert_eq!(raw.len(), 133);

    // equal-frequency levels: a count's level is set by the share of counts
    // strictly below it
    let counts: Vec<f64> = raw.iter().map(|r| r.2).collect();
    let level = |c: f64| {
        let below = counts.iter().filter(|&&x| x < c).count();
        1.0 + (5 * below / counts.len()) as f64
    };
    check_against_raw(&d, &raw, |r| level(r.2));
    assert_eq!((d.scale.min, d.scale.max, d.scale.step), (1.0, 5.0, 1.0));
    let used: BTreeSet<u64> = d.ratings.iter().map(|t| t.rating as u64).collect();
    assert_eq!(used, (1..=5).collect());
}

#[test]
fn missing_files_are_named() {
    let tmp = tempfile::tempdir().unwrap();
    let err = load_movielens(tmp.path(), MovieLensFormat::Ml100k, FeatureOptions::default()).unwrap_err();
    let text = err.to_string();
    assert!(matches!(err, Error::MissingFiles(_)));
    assert!(text.contains("u.data") && text.contains("u.item"), "{text}");
    assert!(matches!(
        load_lastfm(tmp.path(), 5, FeatureOptions::default()),
        Err(Error::MissingFiles(_))
    ));
}

#[test]
fn malformed_line_reports_its_number() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("ratings.dat"), "1::10::4::0\n1::11::four::0\n").unwrap();
    match load_movielens(tmp.path(), MovieLensFormat::Ml10m, FeatureOptions::default()) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected a parse error, got {other:?}"),
    }
}
