//! Station record ingestion.
//!
//! Two input formats are understood: ISD-Lite text (twelve integer columns,
//! `-9999` for missing) and a canonical CSV with ISO-8601 timestamps. Both
//! decode into [`MetRecord`]s, which [`quality_filter`] then places on the
//! canonical 3-hour grid.

use std::io::{Read, Write};

use chrono::{Duration, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::terrain::RoughnessTable;
use crate::{timefmt, Error, Result};

/// Missing-value sentinel used by ISD-Lite.
pub const ISD_MISSING: i64 = -9999;

/// Canonical sampling interval in hours.
pub const GRID_HOURS: i64 = 3;

/// Speeds above this are treated as instrument faults.
pub const MAX_PLAUSIBLE_SPEED: f64 = 120.0;

/// Plausible sea-level pressure range in hPa.
pub const PRESSURE_RANGE: (f64, f64) = (800.0, 1100.0);

pub const CSV_HEADER: [&str; 6] = [
    "timestamp",
    "wind_dir_deg",
    "wind_speed_ms",
    "pressure_hpa",
    "temp_c",
    "precip_mm",
];

/// The five observed channels, in feature order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Speed,
    Direction,
    Pressure,
    Temperature,
    Precip,
}

impl Channel {
    pub const ALL: [Channel; 5] = [
        Channel::Speed,
        Channel::Direction,
        Channel::Pressure,
        Channel::Temperature,
        Channel::Precip,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Speed => "speed",
            Channel::Direction => "direction",
            Channel::Pressure => "pressure",
            Channel::Temperature => "temperature",
            Channel::Precip => "precip",
        }
    }
}

/// One observation at a UTC instant. Every field may be missing; a record
/// with all fields missing marks a gap in the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetRecord {
    pub timestamp: NaiveDateTime,
    /// Degrees, `[0, 360]`.
    pub wind_dir: Option<f64>,
    /// m/s, non-negative.
    pub wind_speed: Option<f64>,
    /// hPa.
    pub pressure: Option<f64>,
    /// °C.
    pub temperature: Option<f64>,
    /// mm over the observation interval, non-negative.
    pub precip: Option<f64>,
}

impl MetRecord {
    pub fn gap(timestamp: NaiveDateTime) -> Self {
        MetRecord {
            timestamp,
            wind_dir: None,
            wind_speed: None,
            pressure: None,
            temperature: None,
            precip: None,
        }
    }

    pub fn is_gap(&self) -> bool {
        Channel::ALL.iter().all(|&c| self.get(c).is_none())
    }

    pub fn get(&self, channel: Channel) -> Option<f64> {
        match channel {
            Channel::Speed => self.wind_speed,
            Channel::Direction => self.wind_dir,
            Channel::Pressure => self.pressure,
            Channel::Temperature => self.temperature,
            Channel::Precip => self.precip,
        }
    }
}

/// Static description of a station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationMeta {
    pub station_id: String,
    pub latitude: f64,
    pub longitude: f64,
    /// Years of valid data, used to turn event counts into annual rates.
    pub record_years: f64,
    pub roughness: RoughnessTable,
}

impl StationMeta {
    pub fn validate(&self) -> Result<()> {
        if !(self.record_years > 0.0) {
            return Err(Error::Config(format!(
                "station {}: record_years must be positive, got {}",
                self.station_id, self.record_years
            )));
        }
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(Error::Config(format!("latitude {} out of range", self.latitude)));
        }
        if !(-180.0..=180.0).contains(&self.longitude) {
            return Err(Error::Config(format!("longitude {} out of range", self.longitude)));
        }
        Ok(())
    }
}

fn scaled(raw: i64) -> Option<f64> {
    (raw != ISD_MISSING).then(|| raw as f64 / 10.0)
}

fn parse_isd_line(line: &str, lineno: usize) -> Result<MetRecord> {
    let err = |msg: String| Error::Parse { line: lineno, msg };
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 12 {
        return Err(err(format!("expected 12 fields, found {}", tokens.len())));
    }
    let mut f = [0i64; 12];
    for (slot, tok) in f.iter_mut().zip(&tokens) {
        *slot = tok
            .parse()
            .map_err(|_| err(format!("non-integer field {tok:?}")))?;
    }
    let date = u32::try_from(f[1])
        .ok()
        .zip(u32::try_from(f[2]).ok())
        .and_then(|(m, d)| NaiveDate::from_ymd_opt(f[0] as i32, m, d))
        .ok_or_else(|| err(format!("invalid date {}-{}-{}", f[0], f[1], f[2])))?;
    let timestamp = u32::try_from(f[3])
        .ok()
        .and_then(|h| date.and_hms_opt(h, 0, 0))
        .ok_or_else(|| err(format!("invalid hour {}", f[3])))?;

    let wind_dir = (f[7] != ISD_MISSING).then_some(f[7] as f64);
    if let Some(d) = wind_dir {
        if !(0.0..=360.0).contains(&d) {
            return Err(err(format!("wind direction {d} outside [0, 360]")));
        }
    }
    let wind_speed = scaled(f[8]);
    if wind_speed.is_some_and(|s| s < 0.0) {
        return Err(err(format!("negative wind speed {}", f[8])));
    }
    // -1 codes a trace amount.
    let precip_field = |raw: i64| -> Result<Option<f64>> {
        match raw {
            ISD_MISSING => Ok(None),
            -1 => Ok(Some(0.0)),
            r if r < 0 => Err(err(format!("negative precipitation {r}"))),
            r => Ok(Some(r as f64 / 10.0)),
        }
    };
    let precip = match precip_field(f[11])? {
        Some(p) => Some(p),
        None => precip_field(f[10])?,
    };

    Ok(MetRecord {
        timestamp,
        wind_dir,
        wind_speed,
        pressure: scaled(f[6]),
        temperature: scaled(f[4]),
        precip,
    })
}

/// Decodes ISD-Lite text. Blank lines are skipped; line numbers in errors
/// are 1-based. Timestamps may repeat but must not go backwards.
pub fn parse_isd_lite(text: &str) -> Result<Vec<MetRecord>> {
    let mut out: Vec<MetRecord> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_isd_line(line, i + 1)?;
        if let Some(prev) = out.last() {
            if rec.timestamp < prev.timestamp {
                return Err(Error::Ordering {
                    line: i + 1,
                    timestamp: timefmt::format(&rec.timestamp),
                });
            }
        }
        out.push(rec);
    }
    Ok(out)
}

/// Writes records back in ISD-Lite layout. Dew point and sky cover are not
/// retained by the parser and are written as missing; precipitation goes
/// into the 6-hour column.
pub fn write_isd_lite(records: &[MetRecord]) -> String {
    let enc = |v: Option<f64>, scale: f64| v.map_or(ISD_MISSING, |x| (x * scale).round() as i64);
    let mut s = String::new();
    for r in records {
        let t = r.timestamp;
        s.push_str(&format!(
            "{:4} {:02} {:02} {:02} {:5} {:5} {:5} {:5} {:5} {:5} {:5} {:5}\n",
            chrono::Datelike::year(&t),
            chrono::Datelike::month(&t),
            chrono::Datelike::day(&t),
            t.hour(),
            enc(r.temperature, 10.0),
            ISD_MISSING,
            enc(r.pressure, 10.0),
            enc(r.wind_dir, 1.0),
            enc(r.wind_speed, 10.0),
            ISD_MISSING,
            ISD_MISSING,
            enc(r.precip, 10.0),
        ));
    }
    s
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the canonical CSV schema.
pub fn write_csv<W: Write>(records: &[MetRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            timefmt::format(&r.timestamp),
            opt_cell(r.wind_dir),
            opt_cell(r.wind_speed),
            opt_cell(r.pressure),
            opt_cell(r.temperature),
            opt_cell(r.precip),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the canonical CSV schema. Columns are located by header name.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<MetRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidInput(format!("missing column {name:?}")))
    };
    let idx: Vec<usize> = CSV_HEADER.iter().map(|h| col(h)).collect::<Result<_>>()?;
    let mut out: Vec<MetRecord> = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let num = |j: usize| -> Result<Option<f64>> {
            let cell = row.get(idx[j]).unwrap_or("");
            if cell.is_empty() {
                return Ok(None);
            }
            cell.parse::<f64>().map(Some).map_err(|_| Error::Parse {
                line,
                msg: format!("non-numeric value {cell:?} in {}", CSV_HEADER[j]),
            })
        };
        let timestamp = timefmt::parse(row.get(idx[0]).unwrap_or("")).map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        let rec = MetRecord {
            timestamp,
            wind_dir: num(1)?,
            wind_speed: num(2)?,
            pressure: num(3)?,
            temperature: num(4)?,
            precip: num(5)?,
        };
        if let Some(prev) = out.last() {
            if rec.timestamp < prev.timestamp {
                return Err(Error::Ordering {
                    line,
                    timestamp: timefmt::format(&rec.timestamp),
                });
            }
        }
        out.push(rec);
    }
    Ok(out)
}

fn bin_start(ts: NaiveDateTime) -> NaiveDateTime {
    let hour = ts.hour() as i64 / GRID_HOURS * GRID_HOURS;
    ts.date().and_hms_opt(hour as u32, 0, 0).expect("valid hour")
}

fn sanitize(mut r: MetRecord) -> MetRecord {
    if r.wind_speed.is_some_and(|s| !(0.0..=MAX_PLAUSIBLE_SPEED).contains(&s)) {
        r.wind_speed = None;
    }
    if r.pressure.is_some_and(|p| !(PRESSURE_RANGE.0..=PRESSURE_RANGE.1).contains(&p)) {
        r.pressure = None;
    }
    if r.wind_dir.is_some_and(|d| !(0.0..=360.0).contains(&d)) {
        r.wind_dir = None;
    }
    if r.precip.is_some_and(|p| p < 0.0) {
        r.precip = None;
    }
    r
}

/// Dedupes, range-checks and regrids one station's records.
///
/// Records sharing a timestamp keep the first. Implausible speeds and
/// pressures become missing. Each 3-hour bin keeps the record with the
/// highest speed (values from that same observation), stamped at the bin
/// start, and empty bins between the first and last observation are filled
/// with gap records.
pub fn quality_filter(records: &[MetRecord]) -> Vec<MetRecord> {
    let mut sorted: Vec<MetRecord> = records.to_vec();
    sorted.sort_by_key(|r| r.timestamp);
    sorted.dedup_by_key(|r| r.timestamp);

    let mut binned: Vec<MetRecord> = Vec::with_capacity(sorted.len());
    for r in sorted.into_iter().map(sanitize) {
        let start = bin_start(r.timestamp);
        let r = MetRecord { timestamp: start, ..r };
        match binned.last_mut() {
            Some(last) if last.timestamp == start => {
                let better = match (r.wind_speed, last.wind_speed) {
                    (Some(a), Some(b)) => a > b,
                    (Some(_), None) => true,
                    _ => false,
                };
                if better || last.is_gap() {
                    *last = r;
                }
            }
            _ => binned.push(r),
        }
    }

    let mut out = Vec::with_capacity(binned.len());
    let step = Duration::hours(GRID_HOURS);
    for r in binned {
        if let Some(prev) = out.last().map(|p: &MetRecord| p.timestamp) {
            let mut t = prev + step;
            while t < r.timestamp {
                out.push(MetRecord::gap(t));
                t += step;
            }
        }
        out.push(r);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(y: i32, m: u32, d: u32, h: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(y, m, d).unwrap().and_hms_opt(h, 0, 0).unwrap()
    }

    #[test]
    fn decodes_reference_line() {
        let recs = parse_isd_lite("2010 01 09 00   -45   -89 10255   320    60     2     0 -9999\n").unwrap();
        assert_eq!(recs.len(), 1);
        let r = recs[0];
        assert_eq!(r.timestamp, ts(2010, 1, 9, 0));
        assert_eq!(r.temperature, Some(-4.5));
        assert_eq!(r.pressure, Some(1025.5));
        assert_eq!(r.wind_dir, Some(320.0));
        assert_eq!(r.wind_speed, Some(6.0));
        assert_eq!(r.precip, Some(0.0));
    }

    #[test]
    fn missing_speed_sentinel() {
        let r = parse_isd_lite("2010 01 09 03 -45 -89 10255 320 -9999 2 0 -9999").unwrap()[0];
        assert_eq!(r.wind_speed, None);
    }

    #[test]
    fn six_hour_precip_preferred() {
        let r = parse_isd_lite("2010 01 09 03 -45 -89 10255 320 60 2 3 25").unwrap()[0];
        assert_eq!(r.precip, Some(2.5));
        let r = parse_isd_lite("2010 01 09 03 -45 -89 10255 320 60 2 -1 -9999").unwrap()[0];
        assert_eq!(r.precip, Some(0.0));
    }

    #[test]
    fn wrong_field_count_reports_line() {
        let text = "2010 01 09 00 -45 -89 10255 320 60 2 0 -9999\n\n2010 01 09 03 -45 -89 10255 320 60 2 0\n";
        match parse_isd_lite(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_integer_token() {
        let err = parse_isd_lite("2010 01 09 00 -4.5 -89 10255 320 60 2 0 -9999").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn backwards_timestamps_rejected() {
        let text = "2010 01 09 03 -45 -89 10255 320 60 2 0 -9999\n2010 01 09 00 -45 -89 10255 320 60 2 0 -9999\n";
        assert!(matches!(parse_isd_lite(text), Err(Error::Ordering { line: 2, .. })));
    }

    #[test]
    fn csv_round_trip() {
        let recs = parse_isd_lite(
            "2010 01 09 00 -45 -89 10255 320 60 2 0 -9999\n2010 01 09 03 -9999 -89 -9999 -9999 75 2 -9999 12\n",
        )
        .unwrap();
        let mut buf = Vec::new();
        write_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("timestamp,wind_dir_deg,wind_speed_ms,pressure_hpa,temp_c,precip_mm\n"));
        assert!(text.contains("2010-01-09T03:00:00Z,,7.5,,,1.2"));
        assert_eq!(read_csv(buf.as_slice()).unwrap(), recs);
    }

    fn rec(t: NaiveDateTime, speed: f64) -> MetRecord {
        MetRecord {
            wind_speed: Some(speed),
            pressure: Some(1010.0),
            ..MetRecord::gap(t)
        }
    }

    #[test]
    fn duplicates_keep_first() {
        let t = ts(2010, 1, 1, 0);
        let out = quality_filter(&[rec(t, 5.0), rec(t, 9.0)]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].wind_speed, Some(5.0));
    }

    #[test]
    fn implausible_speed_dropped() {
        let t = ts(2010, 1, 1, 0);
        let out = quality_filter(&[rec(t, 150.0)]);
        assert_eq!(out[0].wind_speed, None);
        assert_eq!(out[0].pressure, Some(1010.0));
        let mut r = rec(t, 3.0);
        r.pressure = Some(700.0);
        assert_eq!(quality_filter(&[r])[0].pressure, None);
    }

    #[test]
    fn empty_is_empty() {
        assert!(quality_filter(&[]).is_empty());
    }

    #[test]
    fn hourly_downsampled_to_bin_max() {
        let recs: Vec<_> = [3.0, 8.0, 5.0, 4.0]
            .iter()
            .enumerate()
            .map(|(h, &s)| rec(ts(2010, 1, 1, h as u32), s))
            .collect();
        let out = quality_filter(&recs);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].timestamp, ts(2010, 1, 1, 0));
        assert_eq!(out[0].wind_speed, Some(8.0));
        assert_eq!(out[1].timestamp, ts(2010, 1, 1, 3));
        assert_eq!(out[1].wind_speed, Some(4.0));
    }

    #[test]
    fn gaps_are_marked() {
        let out = quality_filter(&[rec(ts(2010, 1, 1, 0), 1.0), rec(ts(2010, 1, 1, 12), 2.0)]);
        assert_eq!(out.len(), 5);
        assert!(out[1..4].iter().all(MetRecord::is_gap));
        assert_eq!(out[2].timestamp, ts(2010, 1, 1, 6));
    }

    #[test]
    fn station_validation() {
        let mut st = StationMeta {
            station_id: "X".into(),
            latitude: 30.0,
            longitude: 122.0,
            record_years: 27.0,
            roughness: RoughnessTable::identity(),
        };
        assert!(st.validate().is_ok());
        st.record_years = 0.0;
        assert!(st.validate().is_err());
    }
}
