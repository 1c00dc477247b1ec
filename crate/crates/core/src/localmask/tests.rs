use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::Rng;

use super::privacy::indicator;
use super::*;
use crate::dataio::{Dataset, RatingScale, RatingTriple};
use crate::rng;

/// One user rating `n_items` items whose features are the given rows.
fn dataset_with_items(rows: &[Vec<f64>], ratings: &[f64], scale: RatingScale) -> Dataset {
    let raw = ratings.iter().enumerate().map(|(i, r)| (0u64, i as u64, *r)).collect();
    let mut d = Dataset::from_raw("synthetic", raw, scale).unwrap();
    let dim = rows[0].len();
    let items: BTreeMap<usize, Vec<f64>> = rows.iter().cloned().enumerate().collect();
    d.set_item_features(&items, dim);
    d.set_user_features(&BTreeMap::new(), 0);
    d
}

fn wide_scale() -> RatingScale {
    RatingScale::new(-100.0, 100.0, 0.5).unwrap()
}

fn random_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng::stream(seed, "test-rows", 0);
    (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}

#[test]
fn linear_party_is_fit_exactly_by_one_order() {
    let rows = random_rows(30, 3, 1);
    let ratings: Vec<f64> = rows.iter().map(|x| 2.5 + 1.5 * x[1]).collect();
    let d = dataset_with_items(&rows, &ratings, wide_scale());
    let spec = FeatureSpec::item_only(&d);
    let hp = MaskHyperparams {
        l2: 0.0,
        ..Default::default()
    };
    let m = train_mask_model(&d.ratings, &d, spec, MaskKind::OneOrder, &hp, 0).unwrap();
    let mse: f64 = d
        .ratings
        .iter()
        .map(|t| (t.rating - m.predict(&d, t.item_id)).powi(2))
        .sum::<f64>()
        / 30.0;
    assert!(mse < 1e-8, "mse {mse}");
}

#[test]
fn single_rating_gives_constant_model() {
    let d = dataset_with_items(&[vec![0.3, -0.2]], &[4.0], RatingScale::new(1.0, 5.0, 1.0).unwrap());
    let spec = FeatureSpec::item_only(&d);
    for kind in [MaskKind::OneOrder, MaskKind::TwoOrder, MaskKind::HighOrder] {
        let m = train_mask_model(&d.ratings, &d, spec, kind, &MaskHyperparams::default(), 3).unwrap();
        assert_eq!(m.predict(&d, 0), 4.0);
        assert_eq!(m.predict_input(&[9.0, 9.0]), 4.0, "{kind:?} must be constant");
    }
}

#[test]
fn factorization_machine_recovers_planted_model() {
    // Oracle: ratings generated by a known FM plus N(0, 0.05^2)-ish noise.
    // A recovered model must predict held-out ratings about as well as the
    // generator itself, i.e. near the noise floor.
    let d_feat = 4;
    let k_fm = 2;
    let truth = ModelShape {
        kind: MaskKind::TwoOrder,
        input_dim: d_feat,
        k_fm,
        hidden: 0,
    };
    let mut rng = rng::stream(11, "planted", 0);
    let planted: Vec<f64> = (0..truth.n_params()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let rows = random_rows(400, d_feat, 2);
    let noise = 0.05;
    let ratings: Vec<f64> = rows
        .iter()
        .map(|x| truth.forward(&planted, x, None) + noise * rng.gen_range(-1.7320508..1.7320508))
        .collect();
    let d = dataset_with_items(&rows, &ratings, wide_scale());
    let (train, held_out) = d.ratings.split_at(300);
    let hp = MaskHyperparams {
        l2: 0.0,
        learning_rate: 0.2,
        epochs: 6000,
        k_fm,
        init_scale: 0.3,
        ..Default::default()
    };
    let m = train_mask_model(train, &d, FeatureSpec::item_only(&d), MaskKind::TwoOrder, &hp, 5).unwrap();
    let mse = |model: &dyn Fn(&[f64]) -> f64| {
        held_out
            .iter()
            .map(|t| (t.rating - model(&rows[t.item_id])).powi(2))
            .sum::<f64>()
            / held_out.len() as f64
    };
    let fitted = mse(&|x| m.predict_input(x));
    let generator = mse(&|x| truth.forward(&planted, x, None));
    let variance = {
        let mean = held_out.iter().map(|t| t.rating).sum::<f64>() / held_out.len() as f64;
        held_out.iter().map(|t| (t.rating - mean).powi(2)).sum::<f64>() / held_out.len() as f64
    };
    assert!(fitted < 1.5 * generator, "fitted {fitted}, noise floor {generator}");
    assert!(fitted < 0.05 * variance);
}

fn gradient_check(shape: ModelShape, seed: u64) {
    let mut rng = rng::stream(seed, "gradcheck", shape.kind as u64);
    for _ in 0..100 {
        let params: Vec<f64> = (0..shape.n_params()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let examples: Vec<(Vec<f64>, f64)> = (0..3)
            .map(|_| {
                let x = (0..shape.input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (x, rng.gen_range(1.0..5.0))
            })
            .collect();
        let l2 = 0.03;
        let (_, grad) = shape.loss_and_gradient(&params, &examples, l2);
        let h = 1e-5;
        for j in 0..params.len() {
            let mut plus = params.clone();
            let mut minus = params.clone();
            plus[j] += h;
            minus[j] -= h;
            let numeric = (shape.loss_and_gradient(&plus, &examples, l2).0
                - shape.loss_and_gradient(&minus, &examples, l2).0)
                / (2.0 * h);
            let scale = grad[j].abs().max(numeric.abs()).max(1e-3);
            assert!(
                (grad[j] - numeric).abs() <= 1e-5 * scale,
                "{:?} param {j}: analytic {} numeric {numeric}",
                shape.kind,
                grad[j]
            );
        }
    }
}

#[test]
fn analytic_gradients_match_finite_differences() {
    gradient_check(
        ModelShape {
            kind: MaskKind::OneOrder,
            input_dim: 5,
            k_fm: 0,
            hidden: 0,
        },
        1,
    );
    gradient_check(
        ModelShape {
            kind: MaskKind::TwoOrder,
            input_dim: 5,
            k_fm: 3,
            hidden: 0,
        },
        2,
    );
    gradient_check(
        ModelShape {
            kind: MaskKind::HighOrder,
            input_dim: 5,
            k_fm: 0,
            hidden: 6,
        },
        3,
    );
}

fn scale_1_5() -> RatingScale {
    RatingScale::new(1.0, 5.0, 1.0).unwrap()
}

#[test]
fn masking_examples() {
    let d = dataset_with_items(&[vec![1.0], vec![-1.0]], &[4.0, 2.0], scale_1_5());
    let spec = FeatureSpec::item_only(&d);
    let hp = MaskHyperparams::default();
    let constant = MaskModel::constant(0, MaskKind::OneOrder, spec, &hp, 3.5);
    assert_eq!(mask_ratings(&d.ratings[..1], &constant, &d)[0].value, 0.5);

    // exact linear fit: f(x) = 3 + x
    let mut perfect = MaskModel::zero(0, MaskKind::OneOrder, spec, &hp, 3.0);
    perfect.params = vec![3.0, 1.0];
    assert!(mask_ratings(&d.ratings, &perfect, &d).iter().all(|m| m.value == 0.0));

    let zero = MaskModel::zero(0, MaskKind::TwoOrder, spec, &hp, 3.0);
    let masked = mask_ratings(&d.ratings, &zero, &d);
    assert_eq!(masked.iter().map(|m| m.value).collect::<Vec<_>>(), vec![4.0, 2.0]);
}

#[test]
fn fedmmf_prediction_examples() {
    let d = dataset_with_items(&[vec![1.0], vec![-1.0]], &[4.0, 2.0], scale_1_5());
    let spec = FeatureSpec::item_only(&d);
    let hp = MaskHyperparams::default();
    let m = MaskModel::constant(0, MaskKind::OneOrder, spec, &hp, 3.5);
    assert_eq!(predict_fedmmf(&[0.5], Some(&[1.0]), &m, &d, 0), 4.0);
    assert_eq!(predict_fedmmf(&[0.0, 0.0], Some(&[0.0, 0.0]), &m, &d, 0), 3.5);
    let m = MaskModel::constant(0, MaskKind::OneOrder, spec, &hp, 3.2);
    assert_eq!(predict_fedmmf(&[3.0], Some(&[1.0]), &m, &d, 0), 5.0);
    // unknown item falls back to the mask model alone
    assert_eq!(predict_fedmmf(&[3.0], None, &m, &d, 1), 3.2);
}

#[test]
fn unknown_item_without_features_uses_train_mean() {
    let scale = scale_1_5();
    let d = Dataset::from_raw("t", vec![(0, 0, 4.0), (0, 1, 2.0)], scale).unwrap();
    let spec = FeatureSpec::item_only(&d);
    let m = train_mask_model(&d.ratings, &d, spec, MaskKind::OneOrder, &MaskHyperparams::default(), 0).unwrap();
    assert_eq!(predict_fedmmf(&[1.0], None, &m, &d, 1), 3.0);
}

#[test]
fn privacy_indicator_examples() {
    let scale = scale_1_5();
    assert_eq!(indicator(&[1.0, 5.0, 3.0], &[1.0, 5.0, 3.0], &scale), 0.0);
    // rescaled truths uniform over {0, 1}, constant prediction 0.5:
    // enumeration gives ((0.5)^2 + (0.5)^2) / 2
    assert_eq!(indicator(&[3.0, 3.0], &[1.0, 5.0], &scale), 0.25);

    let d = dataset_with_items(&[vec![1.0], vec![-1.0]], &[5.0, 1.0], scale);
    let m = MaskModel::constant(
        0,
        MaskKind::OneOrder,
        FeatureSpec::item_only(&d),
        &MaskHyperparams::default(),
        3.0,
    );
    let report = estimate_privacy_indicator(&m, &d.ratings, &[], &d);
    assert_eq!(report.j_estimate, 0.25);
    assert_eq!(report.n_validation, 2);
    assert!(!report.optimistic);
    let fallback = estimate_privacy_indicator(&m, &[], &d.ratings, &d);
    assert!(fallback.optimistic);
    assert_eq!(fallback.n_validation, 0);
}

#[test]
fn group_assignment_examples() {
    assert_eq!(assign_group(0.01, 0.05), PrivacyGroup::Secure);
    assert_eq!(assign_group(0.05, 0.05), PrivacyGroup::Secure);
    assert_eq!(assign_group(0.30, 0.05), PrivacyGroup::Insecure);
    let a = PrivacyReport {
        user_id: 1,
        j_estimate: 0.04,
        n_validation: 3,
        optimistic: false,
    };
    let b = PrivacyReport {
        user_id: 77,
        j_estimate: 0.04,
        n_validation: 0,
        optimistic: true,
    };
    assert_eq!(a.group(0.05), b.group(0.05));
}

#[test]
fn sample_complexity_examples() {
    let b = sample_complexity_bound(100, 0.1, 0.05).unwrap();
    assert!((b - 4000f64.ln() / 0.01).abs() < 1e-9);
    assert!((b - 829.40).abs() < 0.01);
    assert!((sample_complexity_bound(1, 0.3, 1.0).unwrap() - 2f64.ln() / 0.09).abs() < 1e-12);
    assert!(sample_complexity_bound(0, 0.1, 0.1).is_err());
    assert!(sample_complexity_bound(3, 1.5, 0.1).is_err());
}

#[test]
fn monte_carlo_meets_the_bound() {
    let out = theorem1_monte_carlo(8, 0.2, 0.1, 0.35, 2000, 9).unwrap();
    assert_eq!(out.n_samples, 127);
    let sigma = (0.1f64 * 0.9 / 2000.0).sqrt();
    assert!(out.frequency() >= 0.9 - 3.0 * sigma);
}

#[test]
fn mask_models_roundtrip_through_json() {
    let rows = random_rows(20, 3, 4);
    let ratings: Vec<f64> = rows.iter().map(|x| 3.0 + x[0] - x[2]).collect();
    let d = dataset_with_items(&rows, &ratings, wide_scale());
    let hp = MaskHyperparams {
        epochs: 20,
        hidden: 4,
        k_fm: 2,
        ..Default::default()
    };
    for kind in [MaskKind::OneOrder, MaskKind::TwoOrder, MaskKind::HighOrder] {
        let m = train_mask_model(&d.ratings, &d, FeatureSpec::item_only(&d), kind, &hp, 1).unwrap();
        let back = MaskModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }
    let text = MaskModel::zero(0, MaskKind::OneOrder, FeatureSpec::item_only(&d), &hp, 0.0)
        .to_json()
        .unwrap()
        .replace("\"version\": 1", "\"version\": 9");
    assert!(MaskModel::from_json(&text).is_err());
}

#[test]
fn training_is_local_to_the_party() {
    let scale = scale_1_5();
    let build = |other: f64| {
        let raw = vec![(0, 0, 4.0), (0, 1, 2.0), (0, 2, 5.0), (1, 0, other), (1, 2, 1.0)];
        let mut d = Dataset::from_raw("t", raw, scale).unwrap();
        let items = (0..3).map(|i| (i, vec![i as f64 * 0.4 - 0.3, 0.1])).collect();
        d.set_item_features(&items, 2);
        d
    };
    let hp = MaskHyperparams::default();
    for kind in [MaskKind::OneOrder, MaskKind::TwoOrder, MaskKind::HighOrder] {
        let fit = |d: &Dataset| {
            let mine: Vec<RatingTriple> = d.ratings.iter().filter(|t| t.user_id == 0).copied().collect();
            train_mask_model(&mine, d, FeatureSpec::item_only(d), kind, &hp, 7).unwrap()
        };
        assert_eq!(fit(&build(1.0)), fit(&build(5.0)));
    }
}

#[test]
fn zero_model_masks_nothing() {
    let rows = random_rows(5, 2, 8);
    let d = dataset_with_items(&rows, &[1.0, 2.0, 3.0, 4.0, 5.0], scale_1_5());
    let spec = FeatureSpec::item_only(&d);
    let hp = MaskHyperparams::default();
    for kind in [MaskKind::OneOrder, MaskKind::TwoOrder, MaskKind::HighOrder] {
        let m = MaskModel::zero(0, kind, spec, &hp, 3.0);
        for (masked, t) in mask_ratings(&d.ratings, &m, &d).iter().zip(&d.ratings) {
            assert_eq!(masked.value, t.rating);
        }
    }
}

proptest! {
    #[test]
    fn masking_roundtrips_exactly(ratings in proptest::collection::vec(1u8..=5, 2..20), seed in 0u64..1000) {
        let values: Vec<f64> = ratings.iter().map(|r| *r as f64).collect();
        let rows = random_rows(values.len(), 3, seed);
        let d = dataset_with_items(&rows, &values, scale_1_5());
        let hp = MaskHyperparams { epochs: 5, hidden: 3, k_fm: 2, ..Default::default() };
        for kind in [MaskKind::OneOrder, MaskKind::TwoOrder, MaskKind::HighOrder] {
            let m = train_mask_model(&d.ratings, &d, FeatureSpec::item_only(&d), kind, &hp, seed).unwrap();
            for (masked, t) in mask_ratings(&d.ratings, &m, &d).iter().zip(&d.ratings) {
                // the stored residual plus the model's output recovers the
                // rating to within one rounding of the subtraction
                let f = m.predict(&d, t.item_id);
                prop_assert_eq!(masked.value, t.rating - f);
                prop_assert!((masked.value + f - t.rating).abs() <= f64::EPSILON * 8.0);
            }
        }
    }

    #[test]
    fn indicator_is_monotone_in_pointwise_residuals(
        pairs in proptest::collection::vec((1.0f64..5.0, -2.0f64..2.0, 0.0f64..1.0), 1..30)
    ) {
        let scale = scale_1_5();
        let truths: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let worse: Vec<f64> = pairs.iter().map(|p| p.0 + p.1).collect();
        let better: Vec<f64> = pairs.iter().map(|p| p.0 + p.1 * p.2).collect();
        prop_assert!(indicator(&better, &truths, &scale) <= indicator(&worse, &truths, &scale));
    }

    #[test]
    fn worse_than_mean_exceeds_variance(truths in proptest::collection::vec(1.0f64..5.0, 2..30), shift in 0.0f64..2.0) {
        let scale = scale_1_5();
        let mean = truths.iter().sum::<f64>() / truths.len() as f64;
        let variance = indicator(&vec![mean; truths.len()], &truths, &scale);
        // a constant off the mean is never better than the mean
        let off = indicator(&vec![mean + shift; truths.len()], &truths, &scale);
        prop_assert!(off + 1e-12 >= variance);
    }
}
