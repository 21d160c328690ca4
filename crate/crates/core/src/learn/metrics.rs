use std::io::Write;

use super::{ClassScores, Dataset, TrainedClassifier, N_CLASSES};
use crate::features::WindType;
use crate::{Error, Result};

/// `counts[actual][predicted]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub counts: [[usize; N_CLASSES]; N_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..N_CLASSES).map(|c| self.counts[c][c]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    /// Rows scoring at least this much are called positive.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub class: WindType,
    pub support: usize,
    /// 0 when nothing was predicted as this class; see `precision_undefined`.
    pub precision: f64,
    pub precision_undefined: bool,
    pub recall: f64,
    pub recall_undefined: bool,
    /// One-vs-rest; `None` when the test set lacks positives or negatives.
    pub auc: Option<f64>,
    pub roc: Vec<RocPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    /// Mean of the defined per-class AUCs.
    pub macro_auc: Option<f64>,
}

/// ROC curve of `scores` against boolean `positive` labels, one point per
/// distinct score plus the origin, and the trapezoidal area under it.
///
/// The area is accumulated in integer counts and divided once, so it
/// equals the pairwise concordance probability (ties counted half)
/// exactly.
pub fn roc_curve_auc(scores: &[f64], positive: &[bool]) -> Result<(Vec<RocPoint>, f64)> {
    if scores.len() != positive.len() {
        return Err(Error::InvalidInput("scores and labels differ in length".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("NaN score".into()));
    }
    let p = positive.iter().filter(|&&b| b).count() as u128;
    let n = positive.len() as u128 - p;
    if p == 0 || n == 0 {
        return Err(Error::Degenerate("ROC needs both positive and negative rows".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0u128, 0u128);
    let mut twice_area = 0u128;
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        let (tp0, fp0) = (tp, fp);
        while k < order.len() && scores[order[k]] == s {
            if positive[order[k]] { tp += 1 } else { fp += 1 }
            k += 1;
        }
        twice_area += (fp - fp0) * (tp + tp0);
        points.push(RocPoint { threshold: s, fpr: fp as f64 / n as f64, tpr: tp as f64 / p as f64 });
    }
    Ok((points, twice_area as f64 / (2 * p * n) as f64))
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 { (0.0, true) } else { (num as f64 / den as f64, false) }
}

pub fn metrics_from_predictions(
    actual: &[WindType],
    predicted: &[WindType],
    scores: &[ClassScores],
) -> Result<MetricsReport> {
    if actual.len() != predicted.len() || actual.len() != scores.len() {
        return Err(Error::InvalidInput("prediction arrays differ in length".into()));
    }
    if actual.is_empty() {
        return Err(Error::InvalidInput("no rows to evaluate".into()));
    }
    let mut confusion = ConfusionMatrix::default();
    for (a, p) in actual.iter().zip(predicted) {
        confusion.counts[a.index()][p.index()] += 1;
    }
    let per_class = WindType::ALL
        .into_iter()
        .map(|class| {
            let c = class.index();
            let tp = confusion.counts[c][c];
            let support: usize = confusion.counts[c].iter().sum();
            let predicted: usize = (0..N_CLASSES).map(|a| confusion.counts[a][c]).sum();
            let (precision, precision_undefined) = ratio(tp, predicted);
            let (recall, recall_undefined) = ratio(tp, support);
            let s: Vec<f64> = scores.iter().map(|r| r[c]).collect();
            let pos: Vec<bool> = actual.iter().map(|&a| a == class).collect();
            let (roc, auc) = match roc_curve_auc(&s, &pos) {
                Ok((roc, auc)) => (roc, Some(auc)),
                Err(_) => (Vec::new(), None),
            };
            ClassMetrics { class, support, precision, precision_undefined, recall, recall_undefined, auc, roc }
        })
        .collect::<Vec<_>>();
    let aucs: Vec<f64> = per_class.iter().filter_map(|m| m.auc).collect();
    let macro_auc = (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64);
    Ok(MetricsReport {
        accuracy: confusion.correct() as f64 / confusion.total() as f64,
        confusion,
        per_class,
        macro_auc,
    })
}

/// Scores every row of `test` with `model`.
pub fn evaluate(model: &TrainedClassifier, test: &Dataset) -> Result<MetricsReport> {
    let mut predicted = Vec::with_capacity(test.len());
    let mut scores = Vec::with_capacity(test.len());
    for s in &test.samples {
        let p = model.predict(&s.features)?;
        predicted.push(p.label);
        scores.push(p.scores);
    }
    metrics_from_predictions(&test.labels(), &predicted, &scores)
}

/// Evaluates a model trained at one station on another station's labeled
/// rows. The model keeps its own standardization.
pub fn cross_station_evaluate(model: &TrainedClassifier, other: &Dataset) -> Result<MetricsReport> {
    if other.dim() != model.n_features() {
        return Err(Error::InvalidInput(format!(
            "station {} has {} features, model expects {}",
            other.station,
            other.dim(),
            model.n_features()
        )));
    }
    evaluate(model, other)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// One row per class, `class,precision,recall,auc,support,precision_undefined,recall_undefined`,
/// then a `macro` row averaging the per-class values. Undefined ratios
/// are written as 0 and flagged; an undefined AUC is an empty cell.
pub fn write_metrics_csv<W: Write>(report: &MetricsReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["class", "precision", "recall", "auc", "support", "precision_undefined", "recall_undefined"])?;
    let flag = |u: bool| if u { "1" } else { "0" };
    for m in &report.per_class {
        w.write_record([
            m.class.as_str(),
            &m.precision.to_string(),
            &m.recall.to_string(),
            &opt(m.auc),
            &m.support.to_string(),
            flag(m.precision_undefined),
            flag(m.recall_undefined),
        ])?;
    }
    let k = report.per_class.len() as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| report.per_class.iter().map(f).sum::<f64>() / k;
    let support: usize = report.per_class.iter().map(|m| m.support).sum();
    w.write_record([
        "macro",
        &mean(|m| m.precision).to_string(),
        &mean(|m| m.recall).to_string(),
        &opt(report.macro_auc),
        &support.to_string(),
        "",
        "",
    ])?;
    w.flush()?;
    Ok(())
}

/// Rows are actual classes, columns predicted classes.
pub fn write_confusion_csv<W: Write>(confusion: &ConfusionMatrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["actual"];
    header.extend(WindType::ALL.iter().map(|c| c.as_str()));
    w.write_record(&header)?;
    for c in WindType::ALL {
        let mut row = vec![c.as_str().to_string()];
        row.extend(confusion.counts[c.index()].iter().map(|n| n.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_roc_csv<W: Write>(report: &MetricsReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["class", "threshold", "fpr", "tpr"])?;
    for m in &report.per_class {
        for p in &m.roc {
            w.write_record([m.class.as_str(), &p.threshold.to_string(), &p.fpr.to_string(), &p.tpr.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auc(s: &[f64], pos: &[bool]) -> f64 {
        let (mut twice, mut pairs) = (0u64, 0u64);
        for i in 0..s.len() {
            for j in 0..s.len() {
                if pos[i] && !pos[j] {
                    pairs += 1;
                    twice += if s[i] > s[j] { 2 } else if s[i] == s[j] { 1 } else { 0 };
                }
            }
        }
        twice as f64 / (2 * pairs) as f64
    }

    #[test]
    fn hand_computed_roc() {
        let s = [0.9, 0.8, 0.7, 0.6, 0.55, 0.4];
        let pos = [true, false, true, true, false, false];
        let (roc, auc) = roc_curve_auc(&s, &pos).unwrap();
        // 7 of 9 pairs concordant.
        assert!((auc - 7.0 / 9.0).abs() < 1e-15);
        assert_eq!(roc.len(), 7);
        assert_eq!((roc[6].fpr, roc[6].tpr), (1.0, 1.0));
    }

    #[test]
    fn zero_denominators_flagged() {
        let actual = [WindType::Typhoon, WindType::Monsoon];
        let predicted = [WindType::Typhoon, WindType::Typhoon];
        let scores = [[0.8, 0.2, 0.0], [0.6, 0.4, 0.0]];
        let r = metrics_from_predictions(&actual, &predicted, &scores).unwrap();
        let m = &r.per_class[WindType::Monsoon.index()];
        assert_eq!((m.precision, m.precision_undefined), (0.0, true));
        assert_eq!((m.recall, m.recall_undefined), (0.0, false));
        let o = &r.per_class[WindType::Other.index()];
        assert!(o.recall_undefined && o.auc.is_none());
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.macro_auc, Some(1.0));
    }

    proptest! {
        #[test]
        fn auc_equals_concordance(rows in prop::collection::vec((0u8..6, any::<bool>()), 2..60)) {
            let s: Vec<f64> = rows.iter().map(|r| r.0 as f64 / 5.0).collect();
            let pos: Vec<bool> = rows.iter().map(|r| r.1).collect();
            prop_assume!(pos.iter().any(|&b| b) && pos.iter().any(|&b| !b));
            let (roc, auc) = roc_curve_auc(&s, &pos).unwrap();
            prop_assert!((auc - brute_auc(&s, &pos)).abs() < 1e-12);
            prop_assert!(roc.windows(2).all(|w| w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr));
        }
    }
}
