//! Storm classification: six model kinds behind one interface, plus
//! splitting, cross-validation and evaluation.
//!
//! Features are z-scored with statistics of the training rows before any
//! model sees them. Every model produces per-class scores that are
//! non-negative and sum to one; the predicted class is the highest score,
//! ties going to the earliest class in [`WindType::ALL`].

mod artifact;
mod cv;
mod forest;
mod gbdt;
mod knn;
mod logistic;
mod metrics;
mod nb;
mod scale;
mod svm;
mod tree;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use artifact::{load_model, read_model, save_model, write_model, ARTIFACT_FORMAT, ARTIFACT_VERSION};
pub use cv::{
    kfold_cross_validate, stratified_folds, stratified_split, stratified_split_indices, CvReport,
};
pub use metrics::{
    cross_station_evaluate, evaluate, metrics_from_predictions, roc_curve_auc, write_confusion_csv,
    write_metrics_csv, write_roc_csv, ClassMetrics, ConfusionMatrix, MetricsReport, RocPoint,
};
pub use scale::Standardizer;

use crate::features::{FeatureVector, StormLabel, WindType};
use crate::{Error, Result};

pub const N_CLASSES: usize = 3;

/// Per-class scores indexed by [`WindType::index`].
pub type ClassScores = [f64; N_CLASSES];

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub features: Vec<f64>,
    pub label: WindType,
}

/// Labeled feature rows from one station.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub station: String,
    pub samples: Vec<Sample>,
}

impl Dataset {
    /// All rows must share one dimension.
    pub fn new(station: impl Into<String>, samples: Vec<Sample>) -> Result<Self> {
        if let Some(first) = samples.first() {
            let dim = first.features.len();
            if let Some(bad) = samples.iter().find(|s| s.features.len() != dim) {
                return Err(Error::InvalidInput(format!(
                    "row {} has {} features, expected {dim}",
                    bad.id,
                    bad.features.len()
                )));
            }
        }
        Ok(Dataset { station: station.into(), samples })
    }

    /// Joins feature rows with labels by storm id. Storms without a label
    /// are skipped.
    pub fn from_features(
        station: impl Into<String>,
        features: &[(String, FeatureVector)],
        labels: &[StormLabel],
    ) -> Result<Self> {
        let by_id: HashMap<&str, WindType> = crate::features::labels_by_id(labels);
        let samples = features
            .iter()
            .filter_map(|(id, fv)| {
                by_id.get(id.as_str()).map(|&label| Sample {
                    id: id.clone(),
                    features: fv.as_slice().to_vec(),
                    label,
                })
            })
            .collect();
        Dataset::new(station, samples)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.features.len())
    }

    pub fn class_counts(&self) -> [usize; N_CLASSES] {
        let mut c = [0; N_CLASSES];
        for s in &self.samples {
            c[s.label.index()] += 1;
        }
        c
    }

    pub fn labels(&self) -> Vec<WindType> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            station: self.station.clone(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    /// SHA-256 over ids, labels and feature bits.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.samples {
            h.update(s.id.as_bytes());
            h.update([0, s.label.index() as u8]);
            for v in &s.features {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Knn,
    #[serde(rename = "nb")]
    NaiveBayes,
    Svm,
    Gbdt,
    #[serde(rename = "rf")]
    RandomForest,
    #[serde(rename = "lr")]
    Logistic,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 6] = [
        ClassifierKind::Knn,
        ClassifierKind::NaiveBayes,
        ClassifierKind::Svm,
        ClassifierKind::Gbdt,
        ClassifierKind::RandomForest,
        ClassifierKind::Logistic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Knn => "knn",
            ClassifierKind::NaiveBayes => "nb",
            ClassifierKind::Svm => "svm",
            ClassifierKind::Gbdt => "gbdt",
            ClassifierKind::RandomForest => "rf",
            ClassifierKind::Logistic => "lr",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClassifierKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown classifier kind {s:?}")))
    }
}

/// Tunables for all model kinds. Only the fields of the trained kind matter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub knn_k: usize,
    /// Added to every variance, relative to the largest feature variance.
    pub nb_var_smoothing: f64,
    pub svm_c: f64,
    /// RBF width; `None` means `1 / n_features`.
    pub svm_gamma: Option<f64>,
    /// KKT violation tolerance.
    pub svm_tol: f64,
    pub svm_max_iter: usize,
    /// L2 penalty strength.
    pub lr_l2: f64,
    /// Gradient-norm stopping tolerance.
    pub lr_tol: f64,
    pub lr_max_iter: usize,
    pub rf_trees: usize,
    /// Features tried per split; `None` means `floor(sqrt(n_features))`.
    pub rf_max_features: Option<usize>,
    pub rf_max_depth: Option<usize>,
    pub rf_min_samples_leaf: usize,
    pub gbdt_trees: usize,
    pub gbdt_depth: usize,
    pub gbdt_learning_rate: f64,
    pub gbdt_min_samples_leaf: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            knn_k: 5,
            nb_var_smoothing: 1e-9,
            svm_c: 1.0,
            svm_gamma: None,
            svm_tol: 1e-3,
            svm_max_iter: 10_000_000,
            lr_l2: 1.0,
            lr_tol: 1e-6,
            lr_max_iter: 100,
            rf_trees: 100,
            rf_max_features: None,
            rf_max_depth: None,
            rf_min_samples_leaf: 1,
            gbdt_trees: 100,
            gbdt_depth: 3,
            gbdt_learning_rate: 0.1,
            gbdt_min_samples_leaf: 1,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.knn_k >= 1, "knn_k must be at least 1"),
            (self.nb_var_smoothing >= 0.0, "nb_var_smoothing must be non-negative"),
            (self.svm_c > 0.0, "svm_c must be positive"),
            (self.svm_gamma.is_none_or(|g| g > 0.0), "svm_gamma must be positive"),
            (self.svm_tol > 0.0, "svm_tol must be positive"),
            (self.lr_l2 > 0.0, "lr_l2 must be positive"),
            (self.lr_tol > 0.0, "lr_tol must be positive"),
            (self.rf_trees >= 1, "rf_trees must be at least 1"),
            (self.rf_max_features.is_none_or(|m| m >= 1), "rf_max_features must be at least 1"),
            (self.rf_min_samples_leaf >= 1, "rf_min_samples_leaf must be at least 1"),
            (self.gbdt_trees >= 1, "gbdt_trees must be at least 1"),
            (self.gbdt_depth >= 1, "gbdt_depth must be at least 1"),
            (
                self.gbdt_learning_rate > 0.0 && self.gbdt_learning_rate <= 1.0,
                "gbdt_learning_rate must lie in (0, 1]",
            ),
            (self.gbdt_min_samples_leaf >= 1, "gbdt_min_samples_leaf must be at least 1"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::Config((*msg).into())),
            None => Ok(()),
        }
    }
}

/// Kind-specific learned parameters, all on standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelParams {
    Knn(knn::KnnModel),
    #[serde(rename = "nb")]
    NaiveBayes(nb::NaiveBayesModel),
    Svm(svm::SvmModel),
    Gbdt(gbdt::GbdtModel),
    #[serde(rename = "rf")]
    RandomForest(forest::ForestModel),
    #[serde(rename = "lr")]
    Logistic(logistic::LogisticModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub n_train: usize,
    pub station: String,
    /// [`Dataset::fingerprint`] of the training rows.
    pub data_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub kind: ClassifierKind,
    pub hyperparams: Hyperparams,
    pub scaler: Standardizer,
    /// Classes seen in training, in declared order. Others always score 0.
    pub classes: Vec<WindType>,
    pub params: ModelParams,
    pub meta: TrainingMeta,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: WindType,
    pub scores: ClassScores,
}

/// Index of the highest score; the earliest index wins ties.
pub fn argmax(scores: &ClassScores) -> usize {
    let mut best = 0;
    for i in 1..N_CLASSES {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    best
}

fn normalize(mut scores: ClassScores, classes: &[WindType]) -> ClassScores {
    let mut mask = [false; N_CLASSES];
    for c in classes {
        mask[c.index()] = true;
    }
    for (s, &m) in scores.iter_mut().zip(&mask) {
        if !m || !s.is_finite() || *s < 0.0 {
            *s = 0.0;
        }
    }
    let total: f64 = scores.iter().sum();
    if total > 0.0 {
        scores.iter_mut().for_each(|s| *s /= total);
    } else {
        let w = 1.0 / classes.len() as f64;
        for c in classes {
            scores[c.index()] = w;
        }
    }
    scores
}

/// Trains one model. Fails on an empty set or one with a single class.
pub fn train_classifier(
    kind: ClassifierKind,
    train: &Dataset,
    hyper: &Hyperparams,
    seed: u64,
) -> Result<TrainedClassifier> {
    hyper.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    let counts = train.class_counts();
    let classes: Vec<WindType> = WindType::ALL.into_iter().filter(|c| counts[c.index()] > 0).collect();
    if classes.len() < 2 {
        return Err(Error::Degenerate("training set contains a single class".into()));
    }
    let raw: Vec<&[f64]> = train.samples.iter().map(|s| s.features.as_slice()).collect();
    let scaler = Standardizer::fit(&raw);
    let x: Vec<Vec<f64>> = raw.iter().map(|r| scaler.transform(r)).collect();
    let y: Vec<usize> = train.samples.iter().map(|s| s.label.index()).collect();

    let params = match kind {
        ClassifierKind::Knn => ModelParams::Knn(knn::KnnModel::fit(&x, &y, hyper.knn_k)),
        ClassifierKind::NaiveBayes => {
            ModelParams::NaiveBayes(nb::NaiveBayesModel::fit(&x, &y, &classes, hyper.nb_var_smoothing))
        }
        ClassifierKind::Svm => ModelParams::Svm(svm::SvmModel::fit(&x, &y, &classes, hyper)?),
        ClassifierKind::Gbdt => ModelParams::Gbdt(gbdt::GbdtModel::fit(&x, &y, &classes, hyper)),
        ClassifierKind::RandomForest => {
            ModelParams::RandomForest(forest::ForestModel::fit(&x, &y, hyper, seed))
        }
        ClassifierKind::Logistic => {
            ModelParams::Logistic(logistic::LogisticModel::fit(&x, &y, &classes, hyper)?)
        }
    };
    Ok(TrainedClassifier {
        kind,
        hyperparams: hyper.clone(),
        scaler,
        classes,
        params,
        meta: TrainingMeta {
            seed,
            n_train: train.len(),
            station: train.station.clone(),
            data_fingerprint: train.fingerprint(),
        },
    })
}

impl TrainedClassifier {
    pub fn n_features(&self) -> usize {
        self.scaler.mean.len()
    }

    pub fn predict(&self, features: &[f64]) -> Result<Prediction> {
        if features.len() != self.n_features() {
            return Err(Error::InvalidInput(format!(
                "feature vector has {} entries, model expects {}",
                features.len(),
                self.n_features()
            )));
        }
        let x = self.scaler.transform(features);
        let raw = match &self.params {
            ModelParams::Knn(m) => m.scores(&x),
            ModelParams::NaiveBayes(m) => m.scores(&x),
            ModelParams::Svm(m) => m.scores(&x),
            ModelParams::Gbdt(m) => m.scores(&x),
            ModelParams::RandomForest(m) => m.scores(&x),
            ModelParams::Logistic(m) => m.scores(&x),
        };
        let scores = normalize(raw, &self.classes);
        let label = WindType::from_index(argmax(&scores)).expect("valid class index");
        Ok(Prediction { label, scores })
    }
}

/// Free-function form of [`TrainedClassifier::predict`].
pub fn predict(model: &TrainedClassifier, features: &[f64]) -> Result<Prediction> {
    model.predict(features)
}
