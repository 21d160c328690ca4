use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{train_classifier, ClassifierKind, Dataset, Hyperparams};
use crate::features::WindType;
use crate::{Error, Result};

fn class_lists(labels: &[WindType]) -> Vec<Vec<usize>> {
    WindType::ALL
        .into_iter()
        .map(|c| (0..labels.len()).filter(|&i| labels[i] == c).collect())
        .collect()
}

/// Per class, shuffles its rows and sends `floor(ratio·n_c)` of them to
/// training. Every present class needs at least two rows so both sides
/// can hold it. Index lists come back sorted.
pub fn stratified_split_indices(labels: &[WindType], ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("train ratio {ratio} must lie in (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (class, mut rows) in WindType::ALL.into_iter().zip(class_lists(labels)) {
        if rows.is_empty() {
            continue;
        }
        if rows.len() < 2 {
            return Err(Error::InvalidInput(format!("class {class} has a single row; cannot split")));
        }
        rows.shuffle(&mut rng);
        let k = ((ratio * rows.len() as f64 + 1e-9).floor() as usize).clamp(1, rows.len() - 1);
        train.extend_from_slice(&rows[..k]);
        test.extend_from_slice(&rows[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn stratified_split(ds: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = stratified_split_indices(&ds.labels(), ratio, seed)?;
    Ok((ds.subset(&train), ds.subset(&test)))
}

/// Assigns rows to `k` folds: each class's rows are shuffled, the lists
/// concatenated in class order, and the j-th row goes to fold `j mod k`.
/// Fold sizes, and each class's count per fold, differ by at most one.
pub fn stratified_folds(labels: &[WindType], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("cross-validation needs k >= 2, got {k}")));
    }
    if labels.len() < k {
        return Err(Error::InvalidInput(format!("{} rows cannot fill {k} folds", labels.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut j = 0;
    for mut rows in class_lists(labels) {
        rows.shuffle(&mut rng);
        for r in rows {
            folds[j % k].push(r);
            j += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub kind: ClassifierKind,
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
}

/// Stratified k-fold accuracy. Fold `i` trains with seed `seed + i`.
pub fn kfold_cross_validate(
    ds: &Dataset,
    k: usize,
    kind: ClassifierKind,
    hyper: &Hyperparams,
    seed: u64,
) -> Result<CvReport> {
    let folds = stratified_folds(&ds.labels(), k, seed)?;
    let fold_accuracies = folds
        .par_iter()
        .enumerate()
        .map(|(i, test_idx)| {
            let train_idx: Vec<usize> = (0..ds.len()).filter(|r| test_idx.binary_search(r).is_err()).collect();
            let model = train_classifier(kind, &ds.subset(&train_idx), hyper, seed.wrapping_add(i as u64))?;
            let mut correct = 0;
            for &r in test_idx {
                let s = &ds.samples[r];
                if model.predict(&s.features)?.label == s.label {
                    correct += 1;
                }
            }
            Ok(correct as f64 / test_idx.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = fold_accuracies.len() as f64;
    let mean = fold_accuracies.iter().sum::<f64>() / n;
    let std = (fold_accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(CvReport { kind, fold_accuracies, mean, std })
}
