//! Trains the three private mask models for a few parties of the sample
//! data and shows how much of each rating the residual still exposes.

use std::path::Path;

use fedmmf::dataio::{load_movielens, split_party, FeatureOptions, MovieLensFormat, SplitRatios};
use fedmmf::localmask::{
    estimate_privacy_indicator, mask_ratings, train_mask_model, FeatureSpec, MaskHyperparams, MaskKind,
};

const TH_J: f64 = 0.1;

fn main() -> fedmmf::Result<()> {
    let raw = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/ml-100k-sample");
    let dataset = load_movielens(&raw, MovieLensFormat::Ml100k, FeatureOptions { pca_dim: 4 })?;
    let spec = FeatureSpec::item_only(&dataset);
    let hp = MaskHyperparams {
        epochs: 100,
        ..Default::default()
    };

    println!("party  kind        train  J       group     first masked ratings");
    for (user, ratings) in dataset.ratings_by_user().into_iter().enumerate().take(4) {
        let split = split_party(&ratings, SplitRatios::default(), user as u64);
        for kind in [MaskKind::OneOrder, MaskKind::TwoOrder, MaskKind::HighOrder] {
            let model = train_mask_model(&split.train, &dataset, spec, kind, &hp, user as u64)?;
            let report = estimate_privacy_indicator(&model, &split.validation, &split.train, &dataset);
            let masked: Vec<String> = mask_ratings(&split.train, &model, &dataset)
                .iter()
                .take(4)
                .map(|m| format!("{:+.2}", m.value))
                .collect();
            println!(
                "{user:<6} {:<11} {:<6} {:.4}  {:<9} {}",
                kind.label(),
                split.train.len(),
                report.j_estimate,
                format!("{:?}", report.group(TH_J)),
                masked.join(" ")
            );
        }
    }
    Ok(())
}
