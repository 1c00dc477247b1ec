//! One round of adaptive aggregation: two parties send plaintext, six mask
//! their encoded gradients pairwise, and one masked party vanishes after
//! uploading. The survivors' Shamir shares rebuild the missing pair seeds.

use std::collections::{BTreeMap, BTreeSet};

use fedmmf::secagg::{
    adaptive_aggregate, encode, shamir_reconstruct, shamir_split, FieldParams, MaskedSubmission, PartyMasker,
    PlainSubmission, SecAggSetup,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const K: usize = 3;
const ROUND: u64 = 0;

fn main() -> fedmmf::Result<()> {
    let params = FieldParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    // Shamir on its own: any 3 of 5 shares give the secret back.
    let shares = shamir_split(424242, 5, 3, 0, &params, &mut rng)?;
    println!("shamir 3-of-5: {}", shamir_reconstruct(&shares[1..4], &params)?);

    let secure = [0usize, 1];
    let insecure = [2usize, 3, 4, 5, 6, 7];
    let setup = SecAggSetup::new(insecure, None, 9, params)?;
    println!("insecure group {:?}, threshold {}", setup.members(), setup.threshold());

    let items = [10usize, 11];
    let grads: BTreeMap<usize, BTreeMap<usize, Vec<f64>>> = secure
        .iter()
        .chain(&insecure)
        .map(|&u| {
            let g = items
                .iter()
                .map(|&i| (i, (0..K).map(|_| rng.gen_range(-1.0..1.0)).collect()))
                .collect();
            (u, g)
        })
        .collect();
    let rosters: BTreeMap<usize, Vec<usize>> = items.iter().map(|&i| (i, insecure.to_vec())).collect();

    let plain: Vec<PlainSubmission> = secure
        .iter()
        .map(|&u| PlainSubmission {
            party: u,
            gradients: grads[&u].clone(),
        })
        .collect();
    let mut masked = Vec::new();
    for &u in &insecure {
        let book = setup.seed_book(u);
        let mut masker = PartyMasker::new(u, &book, ROUND, params);
        let mut shares = BTreeMap::new();
        for (&i, g) in &grads[&u] {
            shares.insert(i, masker.mask(&encode(g, &params)?, &rosters[&i], i as u64)?);
        }
        masked.push(MaskedSubmission { party: u, shares });
    }
    println!("party 2's share of item 10: {:?}", masked[0].shares[&10].0);

    let gone = 5;
    masked.retain(|m| m.party != gone);
    let dropouts = BTreeSet::from([gone]);
    let sums = adaptive_aggregate(&plain, &masked, &dropouts, &rosters, &setup, ROUND, K)?;

    for &i in &items {
        let mut expected = vec![0.0; K];
        for (u, g) in &grads {
            if *u != gone {
                expected.iter_mut().zip(&g[&i]).for_each(|(e, x)| *e += x);
            }
        }
        let worst = sums[&i]
            .iter()
            .zip(&expected)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!(
            "item {i}: aggregate {:.6?}, max error vs float sum {worst:.2e}",
            sums[&i]
        );
    }
    Ok(())
}
