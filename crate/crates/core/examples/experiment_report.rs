//! Writes a small experiment grid to run directories, each with its config,
//! per-repetition histories and a manifest, then collects them into a
//! results table.

use std::path::Path;

use fedmmf::cli::{report, run_config, ReportArgs};
use fedmmf::fedsim::{Algorithm, DatasetFormat, DatasetSpec, ExperimentConfig};
use fedmmf::localmask::MaskKind;

fn main() -> fedmmf::Result<()> {
    let spec = DatasetSpec {
        format: DatasetFormat::Ml100k,
        path: Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/ml-100k-sample"),
        bins: 5,
        features: Default::default(),
    };
    let dataset = spec.load()?;
    let root = tempfile::tempdir()?;

    let algorithms = [
        Algorithm::FedMf,
        Algorithm::FedMmf {
            mask: MaskKind::OneOrder,
            zero_mask: false,
        },
        Algorithm::LocalOnly {
            mask: MaskKind::OneOrder,
        },
        Algorithm::FedContext {
            mask: MaskKind::OneOrder,
        },
    ];
    let mut runs = Vec::new();
    for algorithm in algorithms {
        let mut config = ExperimentConfig::new(spec.clone(), algorithm);
        config.name = algorithm.label();
        config.hyperparams.k = 4;
        config.hyperparams.gamma = 0.01;
        config.hyperparams.epochs = 100;
        config.mask.epochs = 50;
        config.repetitions = 3;
        let dir = root.path().join(algorithm.label());
        let manifest = run_config(&config, &dataset, &dir)?;
        println!(
            "{:<10} config {}  seeds {:?}",
            manifest.algorithm,
            &manifest.config_hash[..12],
            manifest.seeds
        );
        runs.push(dir);
    }
    if let Some(first) = runs.first() {
        println!("\n{}", std::fs::read_to_string(first.join("config.toml"))?);
    }

    let table = report(&ReportArgs { runs, out: None })?;
    print!("{}", table.to_markdown());
    Ok(())
}
