//! Recovery and ranking attacks on the masked ratings a FedMMF run produced:
//! rescale each party's masked values to its rating range, or read off its
//! top items.

use std::collections::BTreeMap;
use std::path::Path;

use fedmmf::attacks::{attack_report, PartyRatings};
use fedmmf::fedsim::{run_repetition, Algorithm, DatasetFormat, DatasetSpec, ExperimentConfig};
use fedmmf::localmask::MaskKind;

fn main() -> fedmmf::Result<()> {
    let spec = DatasetSpec {
        format: DatasetFormat::Ml100k,
        path: Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/ml-100k-sample"),
        bins: 5,
        features: Default::default(),
    };
    let dataset = spec.load()?;

    for (label, zero_mask) in [("no mask", true), ("two-order mask", false)] {
        let algorithm = Algorithm::FedMmf {
            mask: MaskKind::TwoOrder,
            zero_mask,
        };
        let mut config = ExperimentConfig::new(spec.clone(), algorithm);
        config.hyperparams.epochs = 1;
        config.mask.epochs = 100;
        let run = run_repetition(&config, &dataset, 0)?;

        let truth: BTreeMap<(usize, usize), f64> = dataset
            .ratings
            .iter()
            .map(|t| ((t.user_id, t.item_id), t.rating))
            .collect();
        let mut parties: BTreeMap<usize, PartyRatings> = BTreeMap::new();
        for m in &run.masked_ratings {
            let p = parties.entry(m.user_id).or_insert_with(|| PartyRatings {
                party_id: m.user_id,
                items: Vec::new(),
                masked: Vec::new(),
                original: Vec::new(),
            });
            p.items.push(m.item_id);
            p.masked.push(m.value);
            p.original.push(truth[&(m.user_id, m.item_id)]);
        }
        let parties: Vec<PartyRatings> = parties.into_values().collect();
        let report = attack_report(&parties, dataset.scale.step, &[0.0, 1.0, 2.0], &[0.05, 0.1])?;

        println!("{label}:");
        for (n, g) in report.error_levels.iter().enumerate() {
            println!(
                "  g = {g}: {:.0}% of parties have recovery rate > 0.5",
                100.0 * report.fraction_alpha_above(n, 0.5)
            );
        }
        for (n, h) in report.top_proportions.iter().enumerate() {
            println!(
                "  h = {h}: {:.0}% of parties have hit ratio >= 0.5",
                100.0 * report.fraction_beta_at_least(n, 0.5)
            );
        }
    }
    Ok(())
}
