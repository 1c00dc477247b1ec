//! Parses the bundled MovieLens 100K sample, attaches genre TF-IDF/PCA item
//! features, and round-trips the result through a versioned bundle.

use std::path::Path;

use fedmmf::dataio::{load_movielens, read_bundle, write_bundle, FeatureOptions, MovieLensFormat, SplitRatios};

fn main() -> fedmmf::Result<()> {
    let raw = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/ml-100k-sample");
    let dataset = load_movielens(&raw, MovieLensFormat::Ml100k, FeatureOptions { pca_dim: 4 })?;
    println!(
        "{}: {} users, {} items, {} ratings, scale {}..{} step {}",
        dataset.name,
        dataset.n_users,
        dataset.n_items,
        dataset.ratings.len(),
        dataset.scale.min,
        dataset.scale.max,
        dataset.scale.step
    );
    println!(
        "item features: {} dims, user features: {} dims",
        dataset.item_feature_dim(),
        dataset.user_feature_dim()
    );

    let dir = tempfile::tempdir()?;
    let manifest = write_bundle(dir.path(), &dataset, 7, SplitRatios::default())?;
    let (back, read_manifest) = read_bundle(dir.path())?;
    assert_eq!(back, dataset);
    assert_eq!(read_manifest, manifest);
    println!("bundle hash {}", manifest.dataset_hash);
    Ok(())
}
