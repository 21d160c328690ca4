//! Plot-ready CSVs and a plain-text summary built from whatever stage
//! artifacts exist. Missing inputs are skipped with a notice.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use windclime::features::read_labels_csv;
use windclime::terrain::RoughnessTable;
use windclime::{Error, Result, WindType};

use crate::config::Config;
use crate::output::{open, Outputs};
use crate::stages::names::*;

pub const SUMMARY: &str = "report_summary.txt";
pub const HISTOGRAM: &str = "report_class_histogram.csv";
pub const BOXPLOT: &str = "report_cv_boxplot.csv";
pub const CURVES_OUT: &str = "report_return_curves.csv";

pub fn roc_name(t: WindType) -> String {
    format!("report_roc_{t}.csv")
}

pub fn windrose_name(t: WindType) -> String {
    format!("report_windrose_{t}.csv")
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn read_rows(path: &Path) -> Result<(csv::StringRecord, Vec<csv::StringRecord>)> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let header = r.headers()?.clone();
    let rows = r.records().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((header, rows))
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn f(v: f64) -> String {
    v.to_string()
}

pub fn emit_report(cfg: &Config, dir: &Path, out: &mut Outputs) -> Result<()> {
    let mut summary = String::new();
    let mut produced = 0;
    let skip = |summary: &mut String, what: &str, need: &str| {
        let msg = format!("{what} skipped: {need} not found");
        log::warn!("{msg}");
        println!("report: {msg}");
        let _ = writeln!(summary, "- {msg}");
    };
    let _ = writeln!(summary, "windclime report for station {}", cfg.station.id);
    let _ = writeln!(summary);

    // Storm counts per class, from the manual labels and/or predictions.
    let labeled: Option<Vec<WindType>> = match &cfg.train.labels {
        Some(p) if cfg.resolve(p).is_file() => {
            Some(read_labels_csv(open(&cfg.resolve(p))?)?.into_iter().map(|l| l.label).collect())
        }
        _ => None,
    };
    let predicted: Option<Vec<WindType>> = match dir.join(PREDICTIONS) {
        p if p.is_file() => {
            let (_, rows) = read_rows(&p)?;
            Some(rows.iter().map(|r| r[1].parse()).collect::<Result<_>>()?)
        }
        _ => None,
    };
    if labeled.is_none() && predicted.is_none() {
        skip(&mut summary, "class histogram", "train.labels or predictions.csv");
    } else {
        let count = |v: &Option<Vec<WindType>>, t| v.as_ref().map_or(String::new(), |v| v.iter().filter(|&&x| x == t).count().to_string());
        let rows = WindType::ALL.iter().map(|&t| vec![t.to_string(), count(&labeled, t), count(&predicted, t)]);
        out.add(HISTOGRAM, csv_bytes(&["class", "labeled", "predicted"], rows)?);
        produced += 1;
        let _ = writeln!(summary, "Storms per class (labeled / predicted):");
        for t in WindType::ALL {
            let _ = writeln!(summary, "  {t:<8} {:>6} / {:>6}", count(&labeled, t), count(&predicted, t));
        }
    }

    // Cross-validation box plot: five-number summary plus the raw folds.
    let cv = dir.join(CV_FOLDS);
    if cv.is_file() {
        let (_, rows) = read_rows(&cv)?;
        let mut by_kind: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut order = Vec::new();
        for r in &rows {
            let acc: f64 = r[2].parse().map_err(|_| Error::Artifact(format!("bad accuracy {:?} in cv_folds.csv", &r[2])))?;
            if !by_kind.contains_key(&r[0]) {
                order.push(r[0].to_string());
            }
            by_kind.entry(r[0].to_string()).or_default().push(acc);
        }
        let _ = writeln!(summary, "\nCross-validation accuracy:");
        let mut out_rows = Vec::new();
        for kind in &order {
            let mut v = by_kind[kind].clone();
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let std = (v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
            v.sort_by(f64::total_cmp);
            let folds = by_kind[kind].iter().map(|a| a.to_string()).collect::<Vec<_>>().join(";");
            out_rows.push(vec![
                kind.clone(),
                v.len().to_string(),
                f(v[0]),
                f(quantile(&v, 0.25)),
                f(quantile(&v, 0.5)),
                f(quantile(&v, 0.75)),
                f(v[v.len() - 1]),
                f(mean),
                f(std),
                folds,
            ]);
            let _ = writeln!(summary, "  {kind:<4} mean {mean:.4}  std {std:.4}  median {:.4}", quantile(&v, 0.5));
        }
        out.add(
            BOXPLOT,
            csv_bytes(&["classifier", "folds", "min", "q1", "median", "q3", "max", "mean", "std", "fold_accuracies"], out_rows)?,
        );
        produced += 1;
    } else {
        skip(&mut summary, "CV box plot", CV_FOLDS);
    }

    // Per-class ROC points and the evaluation summary.
    let roc = dir.join(ROC);
    if roc.is_file() {
        let (_, rows) = read_rows(&roc)?;
        for t in WindType::ALL {
            let pts = rows
                .iter()
                .filter(|r| &r[0] == t.as_str())
                .map(|r| vec![r[1].to_string(), r[2].to_string(), r[3].to_string()]);
            out.add(&roc_name(t), csv_bytes(&["threshold", "fpr", "tpr"], pts)?);
        }
        produced += 1;
        let metrics = dir.join(METRICS);
        if metrics.is_file() {
            let (_, rows) = read_rows(&metrics)?;
            let _ = writeln!(summary, "\nHeld-out evaluation (precision / recall / AUC):");
            for r in &rows {
                let _ = writeln!(summary, "  {:<8} {} / {} / {}", &r[0], &r[1], &r[2], &r[3]);
            }
        }
    } else {
        skip(&mut summary, "ROC curves", ROC);
    }

    // Extreme samples for wind-rose plots, one file per type.
    let samples = dir.join(TYPE_SAMPLES);
    if samples.is_file() {
        let (_, rows) = read_rows(&samples)?;
        let _ = writeln!(summary, "\nExtreme samples per type:");
        for t in WindType::ALL {
            let mine: Vec<Vec<String>> = rows
                .iter()
                .filter(|r| &r[1] == t.as_str())
                .map(|r| {
                    let sector = r[3].parse::<f64>().ok().map_or(String::new(), |d| RoughnessTable::sector_of(d).to_string());
                    vec![r[0].to_string(), r[2].to_string(), r[3].to_string(), sector]
                })
                .collect();
            let _ = writeln!(summary, "  {t:<8} {}", mine.len());
            out.add(&windrose_name(t), csv_bytes(&["storm_id", "speed_ms", "direction_deg", "sector"], mine)?);
        }
        produced += 1;
    } else {
        skip(&mut summary, "wind-rose samples", TYPE_SAMPLES);
    }

    // Return curves are passed through unchanged.
    let curves = dir.join(CURVES);
    if curves.is_file() {
        out.add(CURVES_OUT, std::fs::read(&curves)?);
        produced += 1;
        let (header, rows) = read_rows(&curves)?;
        let _ = writeln!(summary, "\nReturn levels (m/s):");
        let _ = writeln!(summary, "  {}", header.iter().collect::<Vec<_>>().join("  "));
        for r in rows.iter().filter(|r| r[0].parse::<f64>().is_ok_and(|t| [10.0, 50.0, 100.0].iter().any(|g| (t / g - 1.0).abs() < 0.15))) {
            let _ = writeln!(summary, "  {}", r.iter().collect::<Vec<_>>().join("  "));
        }
    } else {
        skip(&mut summary, "return curves", CURVES);
    }

    if produced == 0 {
        return Err(Error::Artifact(format!(
            "nothing to report in {}: run the evaluate, train, evt or curves stages first",
            dir.display()
        )));
    }
    out.add(SUMMARY, summary.into_bytes());
    println!("report: {produced} sections written to {}", dir.display());
    Ok(())
}
