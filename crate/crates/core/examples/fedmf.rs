//! Plain federated matrix factorization on the MovieLens 100K sample: every
//! party uploads plaintext item gradients and the server sums them.

use std::path::Path;

use fedmmf::fedsim::{run_experiment, Algorithm, DatasetFormat, DatasetSpec, ExperimentConfig};

fn main() -> fedmmf::Result<()> {
    let spec = DatasetSpec {
        format: DatasetFormat::Ml100k,
        path: Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/ml-100k-sample"),
        bins: 5,
        features: Default::default(),
    };
    let dataset = spec.load()?;
    let mut config = ExperimentConfig::new(spec, Algorithm::FedMf);
    config.hyperparams.k = 4;
    config.hyperparams.gamma = 0.01;
    config.hyperparams.epochs = 150;
    config.eval_every = 25;
    config.repetitions = 3;

    for result in run_experiment(&config, &dataset)? {
        let curve: Vec<String> = result
            .history
            .iter()
            .map(|p| format!("{}:{:.3}", p.round, p.rmse))
            .collect();
        println!(
            "rep {} seed {}: test RMSE {:.4} MAE {:.4}  [{}]",
            result.repetition,
            result.seed,
            result.rmse,
            result.mae,
            curve.join(" ")
        );
    }
    Ok(())
}
