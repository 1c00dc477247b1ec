use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{DiscreteCDF, Hypergeometric};
use statrs::statistics::Distribution;

use super::*;
use crate::rng;

const LEVELS: [f64; 5] = [1.0, 2.0, 3.0, 4.0, 5.0];

#[test]
fn jacobian_matches_finite_differences() {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    for (k, n) in [(2, 1), (3, 1), (4, 1), (2, 3), (3, 5)] {
        let (instance, _) = random_instance(k, n, &LEVELS, 0.05, 0.1, &mut r);
        let x: Vec<f64> = (0..instance.n_unknowns()).map(|_| r.gen_range(-1.0..1.0)).collect();
        let jac = instance.jacobian(&x);
        let h = 1e-6;
        for c in 0..x.len() {
            let (mut up, mut down) = (x.clone(), x.clone());
            up[c] += h;
            down[c] -= h;
            let (ru, rd) = (instance.residuals(&up), instance.residuals(&down));
            for row in 0..ru.len() {
                let fd = (ru[row] - rd[row]) / (2.0 * h);
                assert!(
                    (fd - jac[(row, c)]).abs() < 1e-6,
                    "k={k} n={n} ({row},{c}): {fd} vs {}",
                    jac[(row, c)]
                );
            }
        }
    }
}

#[test]
fn truth_has_zero_residual() {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let (instance, truth) = random_instance(3, 4, &LEVELS, 0.01, 0.05, &mut r);
    let x: Vec<f64> = truth
        .p_prev
        .iter()
        .chain(&truth.p_curr)
        .chain(&truth.targets)
        .copied()
        .collect();
    assert!(instance.residuals(&x).iter().all(|v| v.abs() < 1e-14));
}

#[test]
fn solves_a_two_dimensional_rating() {
    let (instance, truth) = simulate_instance(
        &[0.4, -0.3],
        vec![vec![0.5, 0.2]],
        vec![vec![-0.3, 0.6]],
        &[4.0],
        0.01,
        0.05,
    );
    let solution =
        gradient_leakage_solve(&instance, &SolverOptions::default(), &mut rng::stream(0, "test", 0)).unwrap();
    assert_eq!(solution.status, LeakageStatus::Resolved);
    assert!((solution.ratings[0] - 4.0).abs() < 1e-3);
    assert!(solution.residual_norm < 1e-8);
    for (a, b) in solution.p_prev.iter().zip(&truth.p_prev) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn mirrored_solutions_fit_equally_well() {
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let (instance, truth) = random_instance(3, 2, &LEVELS, 0.01, 0.05, &mut r);
    let x: Vec<f64> = truth
        .p_prev
        .iter()
        .chain(&truth.p_curr)
        .chain(&truth.targets)
        .map(|v| -v)
        .collect();
    assert!(instance.residuals(&x).iter().all(|v| v.abs() < 1e-14));
    let options = SolverOptions {
        multi_item: true,
        positive_ratings: false,
        ..Default::default()
    };
    let s = gradient_leakage_solve(&instance, &options, &mut r).unwrap();
    assert_eq!(s.status, LeakageStatus::Ambiguous);
}

#[test]
fn zero_user_vector_with_zero_residual_is_ambiguous() {
    let (q_prev, q_curr) = (vec![0.5, 0.2], vec![-0.3, 0.6]);
    let lambda = 0.05;
    let instance = LeakageInstance {
        eta_prev: vec![q_prev.iter().map(|q| lambda * q).collect()],
        eta_curr: vec![q_curr.iter().map(|q| lambda * q).collect()],
        q_prev: vec![q_prev],
        q_curr: vec![q_curr],
        gamma: 0.01,
        lambda,
    };
    assert!(instance.residuals(&[0.0; 5]).iter().all(|v| *v == 0.0));
    let solution =
        gradient_leakage_solve(&instance, &SolverOptions::default(), &mut rng::stream(0, "test", 1)).unwrap();
    assert_eq!(solution.status, LeakageStatus::Ambiguous);
}

#[test]
fn recovers_well_conditioned_ratings() {
    let mut r = rng::stream(3, "test", 0);
    let options = SolverOptions::default();
    let mut hits = 0;
    let total = 300;
    for n in 0..total {
        let k = 2 + n % 3;
        let (instance, truth) = random_instance(k, 1, &LEVELS, 0.01, 0.05, &mut r);
        let s = gradient_leakage_solve(&instance, &options, &mut r).unwrap();
        if s.residual_norm < 1e-8 && (s.ratings[0] - truth.targets[0]).abs() < 1e-3 {
            hits += 1;
        }
    }
    assert!(hits as f64 >= 0.95 * total as f64, "{hits}/{total}");
}

#[test]
fn masked_instances_leak_only_the_residual() {
    let mut r = rng::stream(4, "test", 0);
    let options = SolverOptions::default();
    let mut leaked_residual = 0;
    for _ in 0..100 {
        let rating = LEVELS[r.gen_range(0..5)];
        let mask = r.gen_range(1.0..4.0);
        let target = rating - mask;
        let p: Vec<f64> = (0..3).map(|_| r.gen_range(-1.0..1.0)).collect();
        let q_prev: Vec<f64> = (0..3).map(|_| r.gen_range(-1.0..1.0)).collect();
        let q_curr: Vec<f64> = (0..3).map(|_| r.gen_range(-1.0..1.0)).collect();
        let (instance, truth) = simulate_instance(&p, vec![q_prev], vec![q_curr], &[target], 0.01, 0.05);
        let s = gradient_leakage_solve(&instance, &options, &mut r).unwrap();
        assert!((s.ratings[0] - rating).abs() > 1e-3, "solver found the raw rating");
        if s.status == LeakageStatus::Resolved && (s.ratings[0] - truth.identifiable_targets()[0]).abs() < 1e-3 {
            leaked_residual += 1;
        }
    }
    assert!(leaked_residual >= 90, "{leaked_residual}");
}

#[test]
fn joint_systems_need_the_flag() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let (instance, truth) = random_instance(3, 4, &LEVELS, 0.01, 0.05, &mut r);
    assert!(gradient_leakage_solve(&instance, &SolverOptions::default(), &mut r).is_err());
    let options = SolverOptions {
        multi_item: true,
        ..Default::default()
    };
    let s = gradient_leakage_solve(&instance, &options, &mut r).unwrap();
    assert_eq!(s.status, LeakageStatus::Resolved);
    for (a, b) in s.ratings.iter().zip(&truth.targets) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn zero_mask_is_fully_recovered() {
    let original = [1.0, 3.0, 5.0, 2.0, 4.0, 4.0];
    let alphas = recovery_attack(&original, &original, 1.0, &[0.0, 1.0, 2.0]).unwrap();
    assert_eq!(alphas, vec![1.0, 1.0, 1.0]);
}

#[test]
fn constant_masked_values_rescale_to_the_midpoint() {
    assert_eq!(rescale_to_range(&[0.3; 4], 1.0, 5.0), vec![3.0; 4]);
    // ratings 1, 3, 5 guessed as 3: only the middle one is exact
    let alphas = recovery_attack(&[0.3; 3], &[1.0, 3.0, 5.0], 1.0, &[0.0, 2.0]).unwrap();
    assert_eq!(alphas, vec![1.0 / 3.0, 1.0]);
}

#[test]
fn uniform_masks_recover_at_the_chance_rate() {
    // ML-10M scale, masked values independent of the ratings. Given their
    // sample extremes, the other rescaled guesses are uniform on
    // [0.5, 5], so a guess lands within 0.5 of an interior level with
    // probability 1/4.5 and of an end level with probability 0.5/4.5.
    let levels: Vec<f64> = (1..=10).map(|l| l as f64 * 0.5).collect();
    let mut oracle = 0.0;
    for &level in &levels {
        let lo = (level - 0.5).max(0.5);
        let hi = (level + 0.5).min(5.0);
        oracle += (hi - lo) / 4.5 / levels.len() as f64;
    }
    let mut r = rng::stream(6, "test", 0);
    let (parties, items) = (100, 1000);
    let mut total = 0.0;
    for _ in 0..parties {
        let mut original: Vec<f64> = (0..items).map(|_| levels[r.gen_range(0..10)]).collect();
        original[0] = 0.5;
        original[1] = 5.0;
        let masked: Vec<f64> = (0..items).map(|_| r.gen::<f64>()).collect();
        total += recovery_attack(&masked, &original, 0.5, &[1.0]).unwrap()[0];
    }
    let mean = total / parties as f64;
    let sigma = (oracle * (1.0 - oracle) / (parties * items) as f64).sqrt();
    assert!(
        (mean - oracle).abs() < 4.0 * sigma + 2.0 / items as f64,
        "{mean} vs {oracle}"
    );
}

#[test]
fn identical_ranking_hits_everything() {
    let original = [5.0, 1.0, 4.0, 2.0, 3.0, 4.5, 0.5, 2.5, 3.5, 1.5];
    let items: Vec<usize> = (0..10).collect();
    for h in [0.1, 0.2, 0.5, 1.0] {
        assert_eq!(ranking_attack(&original, &original, &items, h).unwrap(), Some(1.0));
    }
}

#[test]
fn reversed_ranking_misses_the_top_half() {
    let original: Vec<f64> = (0..10).map(f64::from).collect();
    let masked: Vec<f64> = original.iter().map(|r| -r).collect();
    let items: Vec<usize> = (0..10).collect();
    assert_eq!(ranking_attack(&masked, &original, &items, 0.5).unwrap(), Some(0.0));
}

#[test]
fn ties_break_towards_lower_item_ids() {
    let original = [3.0, 5.0, 5.0, 1.0];
    let items = [7, 9, 2, 4];
    // top-1 of the originals is item 2 (tied with 9, lower id)
    assert_eq!(
        ranking_attack(&[0.0, 0.0, 1.0, 0.0], &original, &items, 0.25).unwrap(),
        Some(1.0)
    );
    assert_eq!(
        ranking_attack(&[0.0, 1.0, 0.0, 0.0], &original, &items, 0.25).unwrap(),
        Some(0.0)
    );
    // all masked values tied: the guess is the lowest item id
    assert_eq!(ranking_attack(&[0.0; 4], &original, &items, 0.25).unwrap(), Some(1.0));
}

#[test]
fn small_parties_are_not_attackable() {
    let items: Vec<usize> = (0..9).collect();
    let v = vec![1.0; 9];
    assert_eq!(ranking_attack(&v, &v, &items, 0.1).unwrap(), None);
    assert_eq!(top_count(10, 0.1), 1);
    assert_eq!(top_count(100, 0.29), 29);
    assert!(ranking_attack(&v, &v, &items, 0.0).is_err());
}

#[test]
fn random_masks_hit_at_the_hypergeometric_rate() {
    let (n, h, trials) = (100usize, 0.1, 10_000);
    let top = top_count(n, h);
    let oracle = Hypergeometric::new(n as u64, top as u64, top as u64).unwrap();
    let (mean, variance) = (
        oracle.mean().unwrap() / top as f64,
        oracle.variance().unwrap() / (top * top) as f64,
    );
    assert!(oracle.cdf(top as u64) > 0.999_999);
    let mut r = rng::stream(7, "test", 0);
    let items: Vec<usize> = (0..n).collect();
    let original: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let mut total = 0.0;
    for _ in 0..trials {
        let mut masked = original.clone();
        rand::seq::SliceRandom::shuffle(masked.as_mut_slice(), &mut r);
        total += ranking_attack(&masked, &original, &items, h).unwrap().unwrap();
    }
    let observed = total / trials as f64;
    let sigma = (variance / trials as f64).sqrt();
    assert!(
        (observed - mean).abs() <= 3.0 * sigma,
        "{observed} vs {mean} (sigma {sigma})"
    );
    assert!((mean - 0.1).abs() < 1e-12);
}

#[test]
fn perfect_recovery_fills_the_top_bin() {
    let parties: Vec<PartyRatings> = (0..5)
        .map(|p| PartyRatings {
            party_id: p,
            items: (0..20).collect(),
            masked: (0..20).map(|i| (i % 5) as f64).collect(),
            original: (0..20).map(|i| 1.0 + (i % 5) as f64).collect(),
        })
        .collect();
    let report = attack_report(&parties, 1.0, &[1.0], &[0.1]).unwrap();
    let hist = &report.histograms()[0];
    assert_eq!(hist.proportions()[9], 1.0);
    assert_eq!(hist.proportions().iter().sum::<f64>(), 1.0);
    assert_eq!(report.fraction_alpha_above(0, 0.5), 1.0);

    let mut csv = Vec::new();
    report.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "party_id,n_items,alpha_g1,beta_h0.1");
    let mut csv = Vec::new();
    hist.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "bin_low,bin_high,proportion");
    assert_eq!(text.lines().last().unwrap(), "0.9,1.0,1");
}

fn party() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(-10.0f64..10.0, n),
            prop::collection::vec((1u8..=5).prop_map(f64::from), n),
        )
    })
}

proptest! {
    #[test]
    fn recovery_is_monotone_in_g((masked, original) in party()) {
        let levels = [0.0, 0.5, 1.0, 2.0, 3.0, 10.0];
        let alphas = recovery_attack(&masked, &original, 1.0, &levels).unwrap();
        prop_assert!(alphas.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(alphas.iter().all(|a| (0.0..=1.0).contains(a)));
    }

    #[test]
    fn recovery_ignores_increasing_affine_maps((masked, original) in party(), a in 0.01f64..100.0, b in -100.0f64..100.0) {
        let moved: Vec<f64> = masked.iter().map(|m| a * m + b).collect();
        let levels = [0.5, 1.0, 2.0];
        prop_assert_eq!(
            recovery_attack(&masked, &original, 1.0, &levels).unwrap(),
            recovery_attack(&moved, &original, 1.0, &levels).unwrap()
        );
    }

    #[test]
    fn ranking_ignores_increasing_maps((masked, original) in party(), a in 0.01f64..5.0, b in -5.0f64..5.0) {
        let moved: Vec<f64> = masked.iter().map(|m| (a * m + b).exp() + m.powi(3)).collect();
        let items: Vec<usize> = (0..masked.len()).map(|i| 3 * i + 1).collect();
        for h in [0.1, 0.25, 0.5] {
            let before = ranking_attack(&masked, &original, &items, h).unwrap();
            prop_assert_eq!(before, ranking_attack(&moved, &original, &items, h).unwrap());
            if let Some(beta) = before {
                prop_assert!((0.0..=1.0).contains(&beta));
            }
        }
    }

    #[test]
    fn histogram_counts_every_attacked_party(parties in prop::collection::vec(party(), 1..20)) {
        let parties: Vec<PartyRatings> = parties
            .into_iter()
            .enumerate()
            .map(|(p, (masked, original))| PartyRatings {
                party_id: p,
                items: (0..masked.len()).collect(),
                masked,
                original,
            })
            .collect();
        let report = attack_report(&parties, 1.0, &[1.0, 2.0], &[0.05, 0.5]).unwrap();
        let hists = report.histograms();
        prop_assert_eq!(hists.len(), 4);
        for hist in &hists[..2] {
            prop_assert_eq!(hist.bins.iter().map(|b| b.count).sum::<usize>(), parties.len());
        }
        let attackable = report.parties.iter().filter(|p| p.betas[0].is_some()).count();
        prop_assert_eq!(hists[2].bins.iter().map(|b| b.count).sum::<usize>(), attackable);
    }
}
