mod common;

use concept_qda::faithfulness::{
    class_average_baseline, deletion_curve, pooled_baseline, BaselineKind, CounterfactualOrdering,
    ExternalOrdering, OrderingSource, RandomOrdering,
};
use concept_qda::qda::{accuracy, predict_dataset};
use concept_qda::synthetic::generate;
use concept_qda::{fit_mixture, predict, Ridge};

#[test]
fn endpoints_match_their_definitions() {
    let train = generate(&common::dominant_concept_spec(4, 300, 1)).unwrap();
    let test = generate(&common::dominant_concept_spec(4, 100, 2)).unwrap();
    let model = fit_mixture(&train, Ridge::default()).unwrap();
    let plain = accuracy(&predict_dataset(&model, &test).unwrap(), test.labels());
    for baseline in [BaselineKind::ClassAverage, BaselineKind::Pooled] {
        let base = baseline.compute(&model);
        let c = predict(&model, &base).unwrap();
        let freq =
            test.labels().iter().filter(|&&l| l == c).count() as f64 / test.n_samples() as f64;
        let curve =
            deletion_curve(&model, &test, &CounterfactualOrdering, &[0, 4], baseline).unwrap();
        assert_eq!(curve.accuracies, vec![plain, freq]);
        assert_eq!(curve.baseline, baseline);
        assert_eq!(curve.ordering_source, OrderingSource::LocalCounterfactual);
    }
    let pooled = pooled_baseline(&model);
    let average = class_average_baseline(&model);
    // equal class counts make both baselines coincide
    for (p, a) in pooled.iter().zip(&average) {
        assert!((p - a).abs() < 1e-12);
    }
}

#[test]
fn random_curves_are_seeded() {
    let train = generate(&common::dominant_concept_spec(5, 200, 3)).unwrap();
    let test = generate(&common::dominant_concept_spec(5, 80, 4)).unwrap();
    let model = fit_mixture(&train, Ridge::default()).unwrap();
    let grid: Vec<usize> = (0..=5).collect();
    let a = deletion_curve(
        &model,
        &test,
        &RandomOrdering { seed: 7 },
        &grid,
        BaselineKind::default(),
    )
    .unwrap();
    let b = deletion_curve(
        &model,
        &test,
        &RandomOrdering { seed: 7 },
        &grid,
        BaselineKind::default(),
    )
    .unwrap();
    assert_eq!(a, b);
    assert_eq!(a.seed, Some(7));
    let c = deletion_curve(
        &model,
        &test,
        &RandomOrdering { seed: 8 },
        &grid,
        BaselineKind::default(),
    )
    .unwrap();
    assert_eq!(a.accuracies[0], c.accuracies[0]);
    assert_eq!(a.accuracies[5], c.accuracies[5]);
}

#[test]
fn counterfactual_ordering_finds_the_dominant_concept() {
    let train = generate(&common::dominant_concept_spec(6, 500, 5)).unwrap();
    let test = generate(&common::dominant_concept_spec(6, 200, 6)).unwrap();
    let model = fit_mixture(&train, Ridge::default()).unwrap();
    let cf = deletion_curve(
        &model,
        &test,
        &CounterfactualOrdering,
        &[1],
        BaselineKind::default(),
    )
    .unwrap();
    // nullifying concept 0 first everywhere is the worst case for the classifier
    let external = ExternalOrdering {
        rows: vec![vec![0]; test.n_samples()],
    };
    let worst = deletion_curve(&model, &test, &external, &[1], BaselineKind::default()).unwrap();
    assert!((cf.accuracies[0] - worst.accuracies[0]).abs() <= 0.05);
    let mut random = 0.0;
    for seed in 0..20 {
        random += deletion_curve(
            &model,
            &test,
            &RandomOrdering { seed },
            &[1],
            BaselineKind::default(),
        )
        .unwrap()
        .accuracies[0];
    }
    assert!(cf.accuracies[0] < random / 20.0);
}

#[test]
fn removing_the_top_concept_costs_accuracy() {
    let train = generate(&common::dominant_concept_spec(3, 300, 9)).unwrap();
    let test = generate(&common::dominant_concept_spec(3, 100, 10)).unwrap();
    let model = fit_mixture(&train, Ridge::default()).unwrap();
    let curve = deletion_curve(
        &model,
        &test,
        &CounterfactualOrdering,
        &[0, 1, 2, 3],
        BaselineKind::default(),
    )
    .unwrap();
    assert_eq!(curve.n_null, vec![0, 1, 2, 3]);
    assert!(curve.accuracies[0] > curve.accuracies[1]);
    assert!(curve.accuracies.iter().all(|a| (0.0..=1.0).contains(a)));
}
