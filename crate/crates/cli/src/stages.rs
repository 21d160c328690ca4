use std::collections::HashMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use clap::ValueEnum;
use log::{info, warn};
use windclime::evt::{
    build_type_samples, commingled_annual_max, fit_type_models, read_fits_csv, return_curves,
    return_period_grid, write_curves_csv, write_fits_csv, EvtModel,
};
use windclime::features::{
    featurize_storm, label_by_track, labels_by_id, read_features_csv, read_labels_csv,
    read_tracks_csv, write_features_csv, StormLabel,
};
use windclime::ingest::{parse_isd_lite, quality_filter, read_csv, write_csv, write_isd_lite, GRID_HOURS};
use windclime::learn::{
    cross_station_evaluate, evaluate, kfold_cross_validate, load_model, stratified_split,
    train_classifier, write_confusion_csv, write_metrics_csv, write_model, write_roc_csv, Dataset,
    MetricsReport,
};
use windclime::storms::{extract_storms, read_storms_csv, slice_storms, write_storms_csv};
use windclime::synth::{generate_synthetic_station, write_truth_csv};
use windclime::terrain::correct_records;
use windclime::{evt, Error, MetRecord, Result, StationMeta, WindType};

use crate::config::{Config, InputFormat};
use crate::output::{open, require, Outputs};

pub mod names {
    pub const RECORDS: &str = "records.csv";
    pub const CORRECTED: &str = "corrected_records.csv";
    pub const STATION: &str = "station.json";
    pub const STORMS: &str = "storms.csv";
    pub const FEATURES: &str = "features.csv";
    pub const TRACK_LABELS: &str = "track_labels.csv";
    pub const MODEL: &str = "model.json";
    pub const SPLIT: &str = "split.csv";
    pub const CV_FOLDS: &str = "cv_folds.csv";
    pub const CV_SUMMARY: &str = "cv_summary.csv";
    pub const METRICS: &str = "metrics.csv";
    pub const CONFUSION: &str = "confusion.csv";
    pub const ROC: &str = "roc.csv";
    pub const EVAL_SUMMARY: &str = "evaluation_summary.csv";
    pub const PREDICTIONS: &str = "predictions.csv";
    pub const CROSS_METRICS: &str = "cross_station_metrics.csv";
    pub const CROSS_CONFUSION: &str = "cross_station_confusion.csv";
    pub const CROSS_ROC: &str = "cross_station_roc.csv";
    pub const CROSS_SUMMARY: &str = "cross_station_summary.csv";
    pub const TYPE_SAMPLES: &str = "type_samples.csv";
    pub const ANNUAL_MAXIMA: &str = "annual_maxima.csv";
    pub const FITS: &str = "fits.csv";
    pub const CURVES: &str = "return_curves.csv";
    pub const SYNTH_RECORDS: &str = "synth_records.csv";
    pub const SYNTH_ISD: &str = "synth_records.isd";
    pub const SYNTH_TRUTH: &str = "synth_truth.csv";
}
use names::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    Segment,
    Featurize,
    LabelAssist,
    Train,
    Evaluate,
    CrossStation,
    Evt,
    Curves,
    Synth,
    Report,
}

pub fn run(stage: Stage, cfg: &Config) -> Result<Outputs> {
    let dir = cfg.out_dir();
    let mut out = Outputs::new(&dir);
    match stage {
        Stage::Ingest => ingest(cfg, &mut out)?,
        Stage::Segment => segment(cfg, &dir, &mut out)?,
        Stage::Featurize => featurize(&dir, &mut out)?,
        Stage::LabelAssist => label_assist(cfg, &dir, &mut out)?,
        Stage::Train => train(cfg, &dir, &mut out)?,
        Stage::Evaluate => evaluate_stage(&dir, &mut out)?,
        Stage::CrossStation => cross_station(cfg, &dir, &mut out)?,
        Stage::Evt => evt_stage(cfg, &dir, &mut out)?,
        Stage::Curves => curves(&dir, &mut out)?,
        Stage::Synth => synth(cfg, &mut out)?,
        Stage::Report => crate::report::emit_report(cfg, &dir, &mut out)?,
    }
    Ok(out)
}

fn read_records(path: &Path) -> Result<Vec<MetRecord>> {
    read_csv(open(path)?)
}

fn read_station(dir: &Path) -> Result<StationMeta> {
    let p = require(dir, STATION, "ingest")?;
    let meta: StationMeta = serde_json::from_reader(open(&p)?)
        .map_err(|e| Error::Artifact(format!("{}: {e}", p.display())))?;
    meta.validate()?;
    Ok(meta)
}

fn read_labels(cfg: &Config) -> Result<Vec<StormLabel>> {
    let p = cfg
        .train
        .labels
        .as_ref()
        .ok_or_else(|| Error::Config("train.labels is not set".into()))?;
    let full = cfg.resolve(p);
    read_labels_csv(fs::File::open(&full).map_err(|e| Error::InvalidInput(format!("{}: {e}", full.display())))?)
}

fn ingest(cfg: &Config, out: &mut Outputs) -> Result<()> {
    if cfg.ingest.inputs.is_empty() {
        return Err(Error::Config("ingest.inputs lists no files".into()));
    }
    let mut all = Vec::new();
    for p in &cfg.ingest.inputs {
        let full = cfg.resolve(p);
        let mut text = String::new();
        fs::File::open(&full)
            .and_then(|mut f| f.read_to_string(&mut text))
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", full.display())))?;
        let recs = match cfg.ingest.format {
            InputFormat::IsdLite => parse_isd_lite(&text),
            InputFormat::Csv => read_csv(text.as_bytes()),
        }
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", full.display())))?;
        info!("{}: {} records", full.display(), recs.len());
        all.extend(recs);
    }
    let grid = quality_filter(&all);
    let valid = grid.iter().filter(|r| r.wind_speed.is_some()).count();
    let record_years = cfg
        .station
        .record_years
        .unwrap_or(valid as f64 * GRID_HOURS as f64 / (24.0 * 365.25));
    let station = StationMeta {
        station_id: cfg.station.id.clone(),
        latitude: cfg.station.latitude,
        longitude: cfg.station.longitude,
        record_years,
        roughness: cfg.roughness()?,
    };
    station.validate()?;
    let corrected = correct_records(&grid, &station.roughness);
    out.write(RECORDS, |b| write_csv(&grid, b))?;
    out.write(CORRECTED, |b| write_csv(&corrected, b))?;
    out.json(STATION, &station)?;
    println!(
        "ingest: {} raw records -> {} grid slots ({valid} with wind speed), {record_years:.2} record years",
        all.len(),
        grid.len()
    );
    Ok(())
}

fn segment(cfg: &Config, dir: &Path, out: &mut Outputs) -> Result<()> {
    let station = read_station(dir)?;
    let records = read_records(&require(dir, CORRECTED, "ingest")?)?;
    let s = &cfg.segment;
    let storms = extract_storms(&records, s.threshold, s.span_hours, &s.segmentation(), &station.station_id)?;
    out.write(STORMS, |b| write_storms_csv(&storms, b))?;
    println!("segment: {} storms above {} m/s", storms.len(), s.threshold);
    Ok(())
}

fn load_storms(dir: &Path) -> Result<(StationMeta, Vec<windclime::StormSegment>)> {
    let station = read_station(dir)?;
    let records = read_records(&require(dir, CORRECTED, "ingest")?)?;
    let rows = read_storms_csv(open(&require(dir, STORMS, "segment")?)?)?;
    Ok((station, slice_storms(&records, &rows)?))
}

fn featurize(dir: &Path, out: &mut Outputs) -> Result<()> {
    let (station, storms) = load_storms(dir)?;
    let mut rows = Vec::with_capacity(storms.len());
    for s in &storms {
        match featurize_storm(s, &station) {
            Ok(fv) => rows.push((s.storm_id.clone(), fv)),
            Err(Error::InvalidInput(msg)) => warn!("skipping storm: {msg}"),
            Err(e) => return Err(e),
        }
    }
    out.write(FEATURES, |b| write_features_csv(&rows, b))?;
    println!("featurize: {} of {} storms -> {} features each", rows.len(), storms.len(), windclime::features::FEATURE_COUNT);
    Ok(())
}

fn label_assist(cfg: &Config, dir: &Path, out: &mut Outputs) -> Result<()> {
    let tracks_path = cfg
        .label_assist
        .tracks
        .as_ref()
        .ok_or_else(|| Error::Config("label_assist.tracks is not set".into()))?;
    let full = cfg.resolve(tracks_path);
    let tracks = read_tracks_csv(fs::File::open(&full).map_err(|e| Error::InvalidInput(format!("{}: {e}", full.display())))?)?;
    let (station, storms) = load_storms(dir)?;
    let mut matched = 0;
    out.write(TRACK_LABELS, |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["storm_id", "label", "track_match"])?;
        for s in &storms {
            let hit = label_by_track(s, &tracks, &station, cfg.label_assist.radius_km);
            matched += hit as usize;
            let label = if hit { WindType::Typhoon.as_str() } else { "" };
            w.write_record([s.storm_id.as_str(), label, if hit { "true" } else { "false" }])?;
        }
        w.flush()?;
        Ok(())
    })?;
    println!(
        "label-assist: {matched} of {} storms had a typhoon track within {} km; the rest are left blank for manual labeling",
        storms.len(),
        cfg.label_assist.radius_km
    );
    Ok(())
}

fn labeled_dataset(cfg: &Config, dir: &Path) -> Result<Dataset> {
    let station = read_station(dir)?;
    let features = read_features_csv(open(&require(dir, FEATURES, "featurize")?)?)?;
    let labels = read_labels(cfg)?;
    let ds = Dataset::from_features(&station.station_id, &features, &labels)?;
    if ds.is_empty() {
        return Err(Error::InvalidInput("no storm in features.csv has a label".into()));
    }
    Ok(ds)
}

fn train(cfg: &Config, dir: &Path, out: &mut Outputs) -> Result<()> {
    let t = &cfg.train;
    let ds = labeled_dataset(cfg, dir)?;
    let (train_set, test_set) = stratified_split(&ds, t.train_ratio, t.seed)?;
    let model = train_classifier(t.classifier, &train_set, &t.hyperparams, t.seed)?;
    out.write(MODEL, |b| write_model(&model, b))?;
    out.write(SPLIT, |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["storm_id", "set", "label"])?;
        let mut rows: Vec<(&str, &str, &str)> = train_set
            .samples
            .iter()
            .map(|s| (s.id.as_str(), "train", s.label.as_str()))
            .chain(test_set.samples.iter().map(|s| (s.id.as_str(), "test", s.label.as_str())))
            .collect();
        rows.sort();
        for (id, set, label) in rows {
            w.write_record([id, set, label])?;
        }
        w.flush()?;
        Ok(())
    })?;

    let mut reports = Vec::new();
    for &kind in &t.cv_classifiers {
        let r = kfold_cross_validate(&ds, t.cv_folds, kind, &t.hyperparams, t.seed)?;
        println!("cv {:>4}: mean {:.4} std {:.4}", kind, r.mean, r.std);
        reports.push(r);
    }
    out.write(CV_FOLDS, |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["classifier", "fold", "accuracy"])?;
        for r in &reports {
            for (i, a) in r.fold_accuracies.iter().enumerate() {
                w.write_record([r.kind.as_str(), &(i + 1).to_string(), &a.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    out.write(CV_SUMMARY, |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["classifier", "k", "mean_accuracy", "std_accuracy"])?;
        for r in &reports {
            w.write_record([r.kind.as_str(), &r.fold_accuracies.len().to_string(), &r.mean.to_string(), &r.std.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    println!(
        "train: {} model on {} rows ({} held out for evaluation)",
        t.classifier,
        train_set.len(),
        test_set.len()
    );
    Ok(())
}

/// Metrics, confusion, ROC and summary files under the given names.
fn stage_metrics(
    out: &mut Outputs,
    report: &MetricsReport,
    names: [&str; 4],
    extra: &[(&str, String)],
) -> Result<()> {
    let [metrics, confusion, roc, summary] = names;
    out.write(metrics, |b| write_metrics_csv(report, b))?;
    out.write(confusion, |b| write_confusion_csv(&report.confusion, b))?;
    out.write(roc, |b| write_roc_csv(report, b))?;
    out.write(summary, |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["metric", "value"])?;
        for (k, v) in extra {
            w.write_record([*k, v.as_str()])?;
        }
        w.write_record(["n_rows", &report.confusion.total().to_string()])?;
        w.write_record(["accuracy", &report.accuracy.to_string()])?;
        w.write_record(["macro_auc", &report.macro_auc.map_or_else(String::new, |v| v.to_string())])?;
        w.flush()?;
        Ok(())
    })
}

fn evaluate_stage(dir: &Path, out: &mut Outputs) -> Result<()> {
    let model = load_model(&require(dir, MODEL, "train")?)?;
    let features = read_features_csv(open(&require(dir, FEATURES, "featurize")?)?)?;
    let split = {
        let mut r = csv::Reader::from_reader(open(&require(dir, SPLIT, "train")?)?);
        let mut m: HashMap<String, WindType> = HashMap::new();
        for row in r.records() {
            let row = row?;
            if row.get(1) == Some("test") {
                m.insert(row[0].to_string(), row[2].parse()?);
            }
        }
        m
    };
    let labels: Vec<StormLabel> =
        split.iter().map(|(id, &label)| StormLabel { storm_id: id.clone(), label }).collect();
    let test = Dataset::from_features(&model.meta.station, &features, &labels)?;
    if test.len() != split.len() {
        return Err(Error::Artifact(format!(
            "split.csv lists {} test storms but only {} appear in features.csv",
            split.len(),
            test.len()
        )));
    }
    let report = evaluate(&model, &test)?;
    stage_metrics(out, &report, [METRICS, CONFUSION, ROC, EVAL_SUMMARY], &[("classifier", model.kind.to_string())])?;

    out.write(PREDICTIONS, |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["storm_id", "predicted", "score_typhoon", "score_monsoon", "score_other"])?;
        for (id, fv) in &features {
            let p = model.predict(fv.as_slice())?;
            w.write_record([
                id.as_str(),
                p.label.as_str(),
                &p.scores[0].to_string(),
                &p.scores[1].to_string(),
                &p.scores[2].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    println!(
        "evaluate: {} on {} held-out storms: accuracy {:.4}, macro AUC {}",
        model.kind,
        test.len(),
        report.accuracy,
        report.macro_auc.map_or("n/a".into(), |v| format!("{v:.4}"))
    );
    Ok(())
}

fn cross_station(cfg: &Config, dir: &Path, out: &mut Outputs) -> Result<()> {
    let cs = cfg
        .cross_station
        .as_ref()
        .ok_or_else(|| Error::Config("[cross_station] section is missing".into()))?;
    let model = load_model(&require(dir, MODEL, "train")?)?;
    let fpath = cfg.resolve(&cs.features);
    let lpath = cfg.resolve(&cs.labels);
    let features = read_features_csv(fs::File::open(&fpath).map_err(|e| Error::InvalidInput(format!("{}: {e}", fpath.display())))?)?;
    let labels = read_labels_csv(fs::File::open(&lpath).map_err(|e| Error::InvalidInput(format!("{}: {e}", lpath.display())))?)?;
    let other = Dataset::from_features(&cs.station, &features, &labels)?;
    if other.is_empty() {
        return Err(Error::InvalidInput(format!("no labeled storms for station {}", cs.station)));
    }
    let report = cross_station_evaluate(&model, &other)?;
    stage_metrics(
        out,
        &report,
        [CROSS_METRICS, CROSS_CONFUSION, CROSS_ROC, CROSS_SUMMARY],
        &[("train_station", model.meta.station.clone()), ("test_station", cs.station.clone())],
    )?;
    println!(
        "cross-station: {} -> {}: accuracy {:.4}, macro AUC {}",
        model.meta.station,
        cs.station,
        report.accuracy,
        report.macro_auc.map_or("n/a".into(), |v| format!("{v:.4}"))
    );
    Ok(())
}

fn evt_stage(cfg: &Config, dir: &Path, out: &mut Outputs) -> Result<()> {
    let (station, storms) = load_storms(dir)?;
    let records = read_records(&require(dir, CORRECTED, "ingest")?)?;

    // Given labels take precedence; model predictions fill the rest.
    let given = match &cfg.train.labels {
        Some(_) => read_labels(cfg)?,
        None => Vec::new(),
    };
    let given = labels_by_id(&given);
    let predicted: HashMap<String, WindType> = match dir.join(PREDICTIONS) {
        p if p.is_file() => {
            let mut r = csv::Reader::from_reader(open(&p)?);
            r.records()
                .map(|row| {
                    let row = row?;
                    Ok((row[0].to_string(), row[1].parse()?))
                })
                .collect::<Result<_>>()?
        }
        _ => HashMap::new(),
    };
    if given.is_empty() && predicted.is_empty() {
        return Err(Error::Artifact(
            "no storm types available: set train.labels or run the `evaluate` stage for predictions.csv".into(),
        ));
    }
    let mut typed = Vec::with_capacity(storms.len());
    for s in &storms {
        let (t, source) = match (given.get(s.storm_id.as_str()), predicted.get(&s.storm_id)) {
            (Some(&t), _) => (t, "label"),
            (None, Some(&t)) => (t, "predicted"),
            (None, None) => {
                return Err(Error::InvalidInput(format!("storm {} has neither a label nor a prediction", s.storm_id)))
            }
        };
        typed.push((s, t, source));
    }
    let threshold = cfg.evt.threshold;
    let pairs: Vec<(f64, WindType)> = typed.iter().map(|(s, t, _)| (s.peak_speed, *t)).collect();
    let samples = build_type_samples(&pairs, station.record_years, threshold)?;
    let (types, notices) = fit_type_models(&samples)?;
    for n in &notices {
        warn!("{n}");
        println!("evt: {n}");
    }
    let annual = match commingled_annual_max(&records) {
        Ok(a) => a,
        Err(Error::InvalidInput(msg)) => {
            println!("evt: commingled fit skipped: {msg}");
            Vec::new()
        }
        Err(e) => return Err(e),
    };
    let commingled = if annual.is_empty() {
        None
    } else {
        let maxima: Vec<f64> = annual.iter().map(|a| a.speed).collect();
        match evt::fit_gumbel(&maxima) {
            Ok(f) => Some(f),
            Err(Error::Degenerate(msg)) => {
                println!("evt: commingled fit skipped: {msg}");
                None
            }
            Err(e) => return Err(e),
        }
    };
    let model = EvtModel { threshold, types, commingled };
    out.write(FITS, |b| write_fits_csv(&model, annual.len(), b))?;
    out.write(TYPE_SAMPLES, |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["storm_id", "type", "peak_speed_ms", "peak_direction_deg", "label_source"])?;
        for (s, t, source) in &typed {
            if s.peak_speed < threshold {
                continue;
            }
            let dir = s.peak_direction().map_or_else(String::new, |d| d.to_string());
            w.write_record([s.storm_id.as_str(), t.as_str(), &s.peak_speed.to_string(), &dir, source])?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.write(ANNUAL_MAXIMA, |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["year", "max_speed_ms"])?;
        for a in &annual {
            w.write_record([a.year.to_string(), a.speed.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    for t in WindType::ALL {
        println!("evt: {t}: {} samples, {:.3} per year", samples.count(t), samples.rate(t));
    }
    Ok(())
}

fn curves(dir: &Path, out: &mut Outputs) -> Result<()> {
    let model = read_fits_csv(open(&require(dir, FITS, "evt")?)?)?;
    let grid = return_period_grid();
    let curve = return_curves(&model, &grid)?;
    out.write(CURVES, |b| write_curves_csv(&curve, b))?;
    let at = |col: &[Option<f64>], t: f64| {
        grid.iter().position(|&g| g >= t).and_then(|i| col[i]).map_or("n/a".into(), |v| format!("{v:.2}"))
    };
    println!(
        "curves: {} return periods; mixture V(≈50 yr) = {} m/s, commingled V(≈50 yr) = {} m/s",
        grid.len(),
        at(&curve.mixture, 50.0),
        at(&curve.commingled, 50.0)
    );
    Ok(())
}

fn synth(cfg: &Config, out: &mut Outputs) -> Result<()> {
    let s = generate_synthetic_station(&cfg.synth.spec, cfg.synth.seed)?;
    out.write(SYNTH_RECORDS, |b| write_csv(&s.records, b))?;
    out.add(SYNTH_ISD, write_isd_lite(&s.records).into_bytes());
    out.write(SYNTH_TRUTH, |b| write_truth_csv(&s.truth, b))?;
    let counts: Vec<String> = WindType::ALL
        .iter()
        .map(|&t| format!("{} {t}", s.truth.iter().filter(|x| x.label == t).count()))
        .collect();
    println!("synth: {} records, {} planted storms ({})", s.records.len(), s.truth.len(), counts.join(", "));
    Ok(())
}
