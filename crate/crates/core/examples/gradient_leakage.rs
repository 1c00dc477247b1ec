//! The honest-but-curious server's attack: two consecutive item gradients
//! from one party plus the public update rule pin down the party's rating.
//! Under FedMMF the same algebra only yields the masked residual.

use std::path::Path;

use fedmmf::attacks::{gradient_leakage_solve, instance_from_observation, random_instance, SolverOptions};
use fedmmf::fedsim::{run_repetition, Algorithm, DatasetFormat, DatasetSpec, ExperimentConfig, Observation};
use fedmmf::localmask::MaskKind;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> fedmmf::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let levels = [1.0, 2.0, 3.0, 4.0, 5.0];

    println!("synthetic single-item FedMF uploads (k = 3):");
    for _ in 0..5 {
        let (instance, truth) = random_instance(3, 1, &levels, 0.05, 0.1, &mut rng);
        let solution = gradient_leakage_solve(&instance, &SolverOptions::default(), &mut rng)?;
        println!(
            "  true rating {:.0}, solved {:.6} ({:?}, residual {:.1e})",
            truth.targets[0], solution.ratings[0], solution.status, solution.residual_norm
        );
    }

    let spec = DatasetSpec {
        format: DatasetFormat::Ml100k,
        path: Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/ml-100k-sample"),
        bins: 5,
        features: Default::default(),
    };
    let dataset = spec.load()?;
    let options = SolverOptions {
        multi_item: true,
        ..Default::default()
    };
    for algorithm in [
        Algorithm::FedMf,
        Algorithm::FedMmf {
            mask: MaskKind::OneOrder,
            zero_mask: false,
        },
    ] {
        let mut config = ExperimentConfig::new(spec.clone(), algorithm);
        config.hyperparams.k = 3;
        config.hyperparams.gamma = 0.01;
        config.hyperparams.epochs = 3;
        // everyone sends plaintext so the server sees real gradients
        config.th_j = 1.0;
        config.observe = Some(Observation {
            round: 1,
            parties: vec![0, 1],
        });
        let run = run_repetition(&config, &dataset, 0)?;
        println!("{} transcript:", run.algorithm);
        for observed in &run.observations {
            let (instance, truth) =
                instance_from_observation(observed, config.hyperparams.gamma, config.hyperparams.lambda)?;
            let solution = gradient_leakage_solve(&instance, &options, &mut rng)?;
            let show = |v: &[f64]| {
                v.iter()
                    .take(4)
                    .map(|x| format!("{x:.3}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            println!(
                "  party {} ({} items, {:?}): solved [{}], fitted targets [{}], ratings [{}]",
                observed.party,
                observed.items.len(),
                solution.status,
                show(&solution.ratings),
                show(&truth.identifiable_targets()),
                show(&observed.truth.ratings)
            );
        }
    }
    Ok(())
}
