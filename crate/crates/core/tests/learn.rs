use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use windclime::learn::{
    cross_station_evaluate, evaluate, kfold_cross_validate, metrics_from_predictions, read_model,
    roc_curve_auc, stratified_folds, stratified_split, train_classifier, write_model, ClassifierKind,
    Dataset, Hyperparams, Sample,
};
use windclime::WindType;

const T: WindType = WindType::Typhoon;
const M: WindType = WindType::Monsoon;
const O: WindType = WindType::Other;

fn dataset(rows: &[(&[f64], WindType)]) -> Dataset {
    let samples = rows
        .iter()
        .enumerate()
        .map(|(i, (f, l))| Sample { id: format!("s{i}"), features: f.to_vec(), label: *l })
        .collect();
    Dataset::new("test", samples).unwrap()
}

fn random_dataset(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Dataset {
    let samples = (0..n)
        .map(|i| Sample {
            id: format!("r{i}"),
            features: (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect(),
            label: WindType::from_index(if i < 2 { i } else { rng.random_range(0..3) }).unwrap(),
        })
        .collect();
    Dataset::new("rand", samples).unwrap()
}

/// Exhaustive neighbor search on z-scored features, computed from
/// definitions rather than the model's code path.
fn brute_knn(train: &Dataset, q: &[f64], k: usize) -> (WindType, [f64; 3]) {
    let n = train.len() as f64;
    let dim = train.dim();
    let mut mean = vec![0.0; dim];
    let mut sd = vec![0.0; dim];
    for d in 0..dim {
        mean[d] = train.samples.iter().map(|s| s.features[d]).sum::<f64>() / n;
        let v = train.samples.iter().map(|s| (s.features[d] - mean[d]).powi(2)).sum::<f64>() / n;
        sd[d] = if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 };
    }
    let z = |x: &[f64]| -> Vec<f64> { (0..dim).map(|d| (x[d] - mean[d]) / sd[d]).collect() };
    let qz = z(q);
    let mut dist: Vec<(f64, usize)> = train
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| (z(&s.features).iter().zip(&qz).map(|(a, b)| (a - b).powi(2)).sum(), i))
        .collect();
    dist.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let k = k.min(dist.len());
    let mut votes = [0.0; 3];
    for &(_, i) in &dist[..k] {
        votes[train.samples[i].label.index()] += 1.0;
    }
    let mut best = 0;
    for c in 1..3 {
        if votes[c] > votes[best] {
            best = c;
        }
    }
    (WindType::from_index(best).unwrap(), votes.map(|v| v / k as f64))
}

#[test]
fn knn_matches_brute_force_on_small_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..300 {
        let n = rng.random_range(2..=12);
        let dim = rng.random_range(1..=4);
        let ds = random_dataset(&mut rng, n, dim);
        let k = rng.random_range(1..=5);
        let hyper = Hyperparams { knn_k: k, ..Hyperparams::default() };
        let model = train_classifier(ClassifierKind::Knn, &ds, &hyper, 0).unwrap();
        for _ in 0..5 {
            let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            let (label, votes) = brute_knn(&ds, &q, k);
            let p = model.predict(&q).unwrap();
            assert_eq!(p.label, label, "trial {trial}");
            for c in 0..3 {
                assert!((p.scores[c] - votes[c]).abs() < 1e-12, "trial {trial}");
            }
        }
    }
}

#[test]
fn one_nn_returns_own_label() {
    let ds = dataset(&[(&[0.0, 1.0], T), (&[5.0, 2.0], M), (&[9.0, -4.0], O), (&[1.0, 7.0], M)]);
    let hyper = Hyperparams { knn_k: 1, ..Hyperparams::default() };
    let model = train_classifier(ClassifierKind::Knn, &ds, &hyper, 0).unwrap();
    for s in &ds.samples {
        assert_eq!(model.predict(&s.features).unwrap().label, s.label);
    }
}

#[test]
fn knn_vote_fractions() {
    // The three nearest to the origin are T, T, M.
    let ds = dataset(&[(&[0.1], T), (&[-0.2], T), (&[0.3], M), (&[5.0], M), (&[6.0], O)]);
    let hyper = Hyperparams { knn_k: 3, ..Hyperparams::default() };
    let model = train_classifier(ClassifierKind::Knn, &ds, &hyper, 0).unwrap();
    let p = model.predict(&[0.0]).unwrap();
    assert_eq!(p.label, T);
    assert!((p.scores[0] - 2.0 / 3.0).abs() < 1e-15);
    assert!((p.scores[1] - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn naive_bayes_matches_hand_posterior() {
    // Two features; class T = {(1,2), (3,6)}, class M = {(6,1), (8,3)}.
    // Per class: means (2,4)/(7,2), population variances (1,4)/(1,1).
    let ds = dataset(&[(&[1.0, 2.0], T), (&[3.0, 6.0], T), (&[6.0, 1.0], M), (&[8.0, 3.0], M)]);
    let hyper = Hyperparams { nb_var_smoothing: 0.0, ..Hyperparams::default() };
    let model = train_classifier(ClassifierKind::NaiveBayes, &ds, &hyper, 0).unwrap();
    let gauss = |x: f64, m: f64, v: f64| (-(x - m).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
    for q in [[4.0, 3.0], [5.0, 5.0], [2.5, 1.0], [7.0, 2.5]] {
        let lt = 0.5 * gauss(q[0], 2.0, 1.0) * gauss(q[1], 4.0, 4.0);
        let lm = 0.5 * gauss(q[0], 7.0, 1.0) * gauss(q[1], 2.0, 1.0);
        let pt = lt / (lt + lm);
        let p = model.predict(&q).unwrap();
        assert!((p.scores[0] - pt).abs() < 1e-9, "{q:?}: {} vs {pt}", p.scores[0]);
        assert!((p.scores[1] - (1.0 - pt)).abs() < 1e-9);
        assert_eq!(p.scores[2], 0.0);
    }
}

#[test]
fn svm_separates_toy_set() {
    let mut rows: Vec<(Vec<f64>, WindType)> = Vec::new();
    for i in 0..10 {
        let j = i as f64 * 0.1;
        rows.push((vec![j, -j, 0.5 * j], T));
        rows.push((vec![10.0 + j, 10.0 - j, 10.0 + 0.5 * j], M));
    }
    let refs: Vec<(&[f64], WindType)> = rows.iter().map(|(f, l)| (f.as_slice(), *l)).collect();
    let ds = dataset(&refs);
    let model = train_classifier(ClassifierKind::Svm, &ds, &Hyperparams::default(), 0).unwrap();
    let report = evaluate(&model, &ds).unwrap();
    assert_eq!(report.accuracy, 1.0);
}

#[test]
fn auc_matches_concordance_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut done = 0;
    while done < 200 {
        let n = rng.random_range(2..=20);
        let s: Vec<f64> = (0..n).map(|_| (rng.random_range(0..8) as f64) / 7.0).collect();
        let pos: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        if pos.iter().all(|&b| b) || pos.iter().all(|&b| !b) {
            continue;
        }
        let (mut twice, mut pairs) = (0u64, 0u64);
        for i in 0..n {
            for j in 0..n {
                if pos[i] && !pos[j] {
                    pairs += 1;
                    twice += if s[i] > s[j] { 2 } else if s[i] == s[j] { 1 } else { 0 };
                }
            }
        }
        let (_, auc) = roc_curve_auc(&s, &pos).unwrap();
        assert_eq!(auc, twice as f64 / (2 * pairs) as f64);
        done += 1;
    }
}

#[test]
fn roc_worked_examples() {
    let (_, auc) = roc_curve_auc(&[0.9, 0.8, 0.4, 0.3], &[true, false, true, false]).unwrap();
    assert_eq!(auc, 0.75);
    let (_, auc) = roc_curve_auc(&[0.5; 6], &[true, false, true, false, false, true]).unwrap();
    assert_eq!(auc, 0.5);
    let (_, auc) = roc_curve_auc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
    assert_eq!(auc, 1.0);
    assert!(roc_curve_auc(&[0.1, 0.2], &[true, true]).is_err());
}

#[test]
fn precision_recall_arithmetic() {
    // Typhoon: TP=3, FP=1, FN=2.
    let actual = [T, T, T, T, T, M, M, O];
    let predicted = [T, T, T, M, O, T, M, O];
    let scores: Vec<[f64; 3]> = predicted
        .iter()
        .map(|p| {
            let mut s = [0.1; 3];
            s[p.index()] = 0.8;
            s
        })
        .collect();
    let r = metrics_from_predictions(&actual, &predicted, &scores).unwrap();
    assert_eq!(r.per_class[0].precision, 0.75);
    assert_eq!(r.per_class[0].recall, 0.6);
    assert_eq!(r.accuracy, 5.0 / 8.0);
    assert_eq!(r.confusion.counts[0], [3, 1, 1]);

    let perfect = metrics_from_predictions(&actual, &actual, &scores).unwrap();
    assert_eq!(perfect.confusion.correct(), 8);
    assert!(perfect.per_class.iter().all(|m| m.precision == 1.0 && m.recall == 1.0));
}

#[test]
fn split_and_fold_counts() {
    let labels: Vec<WindType> = (0..30).map(|i| WindType::from_index(i % 3).unwrap()).collect();
    let samples = labels
        .iter()
        .enumerate()
        .map(|(i, &label)| Sample { id: i.to_string(), features: vec![i as f64], label })
        .collect();
    let ds = Dataset::new("s", samples).unwrap();
    let (train, test) = stratified_split(&ds, 0.7, 3).unwrap();
    assert_eq!(train.class_counts(), [7, 7, 7]);
    assert_eq!(test.class_counts(), [3, 3, 3]);

    // 678 rows split across 226/226/226 -> 158 per class, 474 total.
    let big: Vec<WindType> = (0..678).map(|i| WindType::from_index(i % 3).unwrap()).collect();
    let (tr, te) = windclime::learn::stratified_split_indices(&big, 0.7, 1).unwrap();
    assert!(tr.len() == 474 || tr.len() == 475);
    assert_eq!(tr.len() + te.len(), 678);

    let folds = stratified_folds(&big, 10, 4).unwrap();
    let mut sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
    sizes.sort_unstable();
    assert_eq!(sizes, [67, 67, 68, 68, 68, 68, 68, 68, 68, 68]);
}

fn blobs(per_class: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..3 * per_class)
        .map(|i| {
            let c = i % 3;
            Sample {
                id: format!("b{i}"),
                features: (0..6).map(|d| if d % 3 == c { 2.5 } else { 0.0 } + rng.random_range(-1.0..1.0)).collect(),
                label: WindType::from_index(c).unwrap(),
            }
        })
        .collect();
    Dataset::new("blobs", samples).unwrap()
}

#[test]
fn reloaded_model_reproduces_metrics() {
    let ds = blobs(20, 5);
    let hyper = Hyperparams { rf_trees: 10, gbdt_trees: 10, ..Hyperparams::default() };
    for kind in ClassifierKind::ALL {
        let model = train_classifier(kind, &ds, &hyper, 8).unwrap();
        let mut buf = Vec::new();
        write_model(&model, &mut buf).unwrap();
        let back = read_model(buf.as_slice()).unwrap();
        assert_eq!(evaluate(&model, &ds).unwrap(), evaluate(&back, &ds).unwrap(), "{kind}");
        // Same station on both sides is plain self-evaluation.
        assert_eq!(cross_station_evaluate(&model, &ds).unwrap(), evaluate(&model, &ds).unwrap());
    }
}

#[test]
fn majority_predictor_scores_a_third() {
    // A constant feature and k covering the whole training fold make KNN
    // a majority vote; balanced folds tie, and the tie rule picks typhoon.
    let samples = (0..30)
        .map(|i| Sample { id: i.to_string(), features: vec![1.0], label: WindType::from_index(i % 3).unwrap() })
        .collect();
    let ds = Dataset::new("flat", samples).unwrap();
    let hyper = Hyperparams { knn_k: 30, ..Hyperparams::default() };
    let r = kfold_cross_validate(&ds, 10, ClassifierKind::Knn, &hyper, 0).unwrap();
    assert!((r.mean - 1.0 / 3.0).abs() < 0.1, "{}", r.mean);
}

#[test]
fn split_ratio_and_kind_validation() {
    let ds = blobs(4, 1);
    assert!(stratified_split(&ds, 1.0, 0).is_err());
    assert!(stratified_split(&ds, 0.0, 0).is_err());
    assert!(kfold_cross_validate(&ds, 1, ClassifierKind::Knn, &Hyperparams::default(), 0).is_err());
    let bad = Hyperparams { svm_c: -1.0, ..Hyperparams::default() };
    assert!(train_classifier(ClassifierKind::Svm, &ds, &bad, 0).is_err());
}

proptest! {
    #[test]
    fn auc_complement(scores in prop::collection::hash_set(0u32..10_000, 2..40), seed in any::<u64>()) {
        let s: Vec<f64> = scores.into_iter().map(|v| v as f64 / 10_000.0).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pos: Vec<bool> = (0..s.len()).map(|_| rng.random_bool(0.5)).collect();
        pos[0] = true;
        pos[1] = false;
        let flipped: Vec<f64> = s.iter().map(|v| 1.0 - v).collect();
        let (_, a) = roc_curve_auc(&s, &pos).unwrap();
        let (_, b) = roc_curve_auc(&flipped, &pos).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }
}
