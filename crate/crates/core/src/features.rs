//! Storm feature vectors and labels.
//!
//! A storm is summarized by eight statistics (mean, standard deviation,
//! skewness, excess kurtosis, max, min, range, median) of each of its five
//! channels, the same eight statistics of each channel's first differences,
//! and two environment entries: the month of the peak and the station
//! latitude. That is 8 × 5 + 8 × 5 + 2 = 82 entries, laid out as
//!
//! | entries | content |
//! |---------|---------|
//! | `f01..f40` | first-order stats, channel-major (speed, direction, pressure, temperature, precip) |
//! | `f41..f80` | the same on first differences |
//! | `f81` | peak month, 1-12 |
//! | `f82` | station latitude, degrees |
//!
//! Moments are population moments (divide by `n`).

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{Datelike, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::ingest::{Channel, StationMeta};
use crate::storms::StormSegment;
use crate::{timefmt, Error, Result};

pub const STATS_PER_SERIES: usize = 8;
pub const FEATURE_COUNT: usize = 2 * STATS_PER_SERIES * 5 + 2;
pub const STAT_NAMES: [&str; STATS_PER_SERIES] =
    ["mean", "std", "skew", "kurt", "max", "min", "range", "median"];

pub const DEFAULT_TRACK_RADIUS_KM: f64 = 500.0;
const EARTH_RADIUS_KM: f64 = 6371.0;

/// Wind-hazard classes, in declared order. Ties between class scores go to
/// the earliest class in this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindType {
    Typhoon,
    Monsoon,
    Other,
}

impl WindType {
    pub const ALL: [WindType; 3] = [WindType::Typhoon, WindType::Monsoon, WindType::Other];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<WindType> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WindType::Typhoon => "typhoon",
            WindType::Monsoon => "monsoon",
            WindType::Other => "other",
        }
    }
}

impl fmt::Display for WindType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for WindType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "typhoon" | "t" => Ok(WindType::Typhoon),
            "monsoon" | "m" => Ok(WindType::Monsoon),
            "other" | "o" => Ok(WindType::Other),
            _ => Err(Error::InvalidInput(format!("unknown wind type {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StormLabel {
    pub storm_id: String,
    pub label: WindType,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeatureStats {
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    /// Excess kurtosis.
    pub kurtosis: f64,
    pub max: f64,
    pub min: f64,
    pub range: f64,
    pub median: f64,
}

impl FeatureStats {
    pub fn to_array(&self) -> [f64; STATS_PER_SERIES] {
        [
            self.mean,
            self.std,
            self.skewness,
            self.kurtosis,
            self.max,
            self.min,
            self.range,
            self.median,
        ]
    }
}

pub fn series_stats(values: &[f64]) -> Result<FeatureStats> {
    if values.is_empty() {
        return Err(Error::InvalidInput("statistics of an empty series".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in values {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let (skewness, kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };

    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 0 {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    };
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    Ok(FeatureStats {
        mean,
        std: m2.sqrt(),
        skewness,
        kurtosis,
        max,
        min,
        range: max - min,
        median,
    })
}

/// Fixed-length storm descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != FEATURE_COUNT {
            return Err(Error::InvalidInput(format!(
                "feature vector has {} entries, expected {FEATURE_COUNT}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("feature f{:02} is not finite", i + 1)));
        }
        Ok(FeatureVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Column names `f01..f82`.
pub fn feature_columns() -> Vec<String> {
    (1..=FEATURE_COUNT).map(|i| format!("f{i:02}")).collect()
}

/// Human-readable meaning of each feature column.
pub fn feature_descriptions() -> Vec<String> {
    let mut out = Vec::with_capacity(FEATURE_COUNT);
    for order in ["", "diff_"] {
        for c in Channel::ALL {
            for s in STAT_NAMES {
                out.push(format!("{order}{}_{s}", c.name()));
            }
        }
    }
    out.push("peak_month".into());
    out.push("latitude".into());
    out
}

/// Builds the 82-entry descriptor of a storm.
///
/// Missing values are dropped per channel; differences are taken only
/// between adjacent slots that are both present. A channel with no values
/// contributes zeros (and a logged warning), as does a channel with no
/// valid differences to its second-order block.
pub fn featurize_storm(storm: &StormSegment, station: &StationMeta) -> Result<FeatureVector> {
    if storm.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "storm {} has {} points; at least 2 are needed",
            storm.storm_id,
            storm.len()
        )));
    }
    let mut first = Vec::with_capacity(40);
    let mut second = Vec::with_capacity(40);
    for channel in Channel::ALL {
        let series: Vec<Option<f64>> = storm.records.iter().map(|r| r.get(channel)).collect();
        let present: Vec<f64> = series.iter().flatten().copied().collect();
        let diffs: Vec<f64> = series
            .windows(2)
            .filter_map(|w| Some(w[1]? - w[0]?))
            .collect();
        if present.is_empty() {
            log::warn!("storm {}: channel {} is entirely missing", storm.storm_id, channel.name());
            first.extend([0.0; STATS_PER_SERIES]);
        } else {
            first.extend(series_stats(&present)?.to_array());
        }
        if diffs.is_empty() {
            second.extend([0.0; STATS_PER_SERIES]);
        } else {
            second.extend(series_stats(&diffs)?.to_array());
        }
    }
    first.extend(second);
    first.push(storm.peak_time.month() as f64);
    first.push(station.latitude);
    FeatureVector::new(first)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TyphoonTrackPoint {
    pub typhoon_id: String,
    pub timestamp: NaiveDateTime,
    pub latitude: f64,
    pub longitude: f64,
}

/// Great-circle distance on a spherical Earth, km.
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

/// True if any track point lies within `radius_km` of the station while
/// the storm is in progress (inclusive of its start and end).
pub fn label_by_track(
    storm: &StormSegment,
    tracks: &[TyphoonTrackPoint],
    station: &StationMeta,
    radius_km: f64,
) -> bool {
    tracks.iter().any(|p| {
        p.timestamp >= storm.start
            && p.timestamp <= storm.end
            && haversine_km(station.latitude, station.longitude, p.latitude, p.longitude)
                <= radius_km
    })
}

pub fn write_features_csv<W: Write>(rows: &[(String, FeatureVector)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["storm_id".to_string()];
    header.extend(feature_columns());
    w.write_record(&header)?;
    for (id, fv) in rows {
        let mut rec = vec![id.clone()];
        rec.extend(fv.as_slice().iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features_csv<R: Read>(input: R) -> Result<Vec<(String, FeatureVector)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.len() != FEATURE_COUNT + 1 || &headers[0] != "storm_id" {
        return Err(Error::InvalidInput(format!(
            "features CSV must have storm_id plus {FEATURE_COUNT} feature columns"
        )));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let values = row
            .iter()
            .skip(1)
            .map(|c| c.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse { line: i + 2, msg: e.to_string() })?;
        out.push((row[0].to_string(), FeatureVector::new(values)?));
    }
    Ok(out)
}

/// Reads `storm_id,label` pairs. Extra columns are ignored, and rows with
/// a blank label (storms not yet labeled) are skipped.
pub fn read_labels_csv<R: Read>(input: R) -> Result<Vec<StormLabel>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidInput(format!("labels CSV missing column {name:?}")))
    };
    let (id_col, label_col) = (col("storm_id")?, col("label")?);
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let label = row.get(label_col).unwrap_or("");
        if label.is_empty() {
            continue;
        }
        out.push(StormLabel { storm_id: row[id_col].to_string(), label: label.parse()? });
    }
    Ok(out)
}

pub fn write_labels_csv<W: Write>(labels: &[StormLabel], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["storm_id", "label"])?;
    for l in labels {
        w.write_record([l.storm_id.as_str(), l.label.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn labels_by_id(labels: &[StormLabel]) -> HashMap<&str, WindType> {
    labels.iter().map(|l| (l.storm_id.as_str(), l.label)).collect()
}

/// Reads `typhoon_id,timestamp,lat,lon` rows.
pub fn read_tracks_csv<R: Read>(input: R) -> Result<Vec<TyphoonTrackPoint>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |m: &str| Error::Parse { line: i + 2, msg: m.to_string() };
        if row.len() < 4 {
            return Err(bad("expected typhoon_id,timestamp,lat,lon"));
        }
        out.push(TyphoonTrackPoint {
            typhoon_id: row[0].to_string(),
            timestamp: timefmt::parse(&row[1])?,
            latitude: row[2].parse().map_err(|_| bad("bad latitude"))?,
            longitude: row[3].parse().map_err(|_| bad("bad longitude"))?,
        });
    }
    Ok(out)
}
