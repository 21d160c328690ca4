//! Storm extraction.
//!
//! Peaks above a speed threshold are picked greedily, highest first, with
//! any candidate closer than the independence span (96 h) to an already
//! chosen peak suppressed. Each peak gets a window of 33 three-hourly slots
//! centered on it. The window's speed series is then cut recursively at
//! the point of maximum mean contrast (a two-sample t statistic), as long
//! as the cut is significant at level `p0` and both parts keep at least
//! `l0` points. The part that holds the center peak is the storm.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use chrono::{Duration, NaiveDateTime};
use statrs::function::beta::beta_reg;

use crate::ingest::{MetRecord, GRID_HOURS};
use crate::{timefmt, Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 12.0;
pub const DEFAULT_SPAN_HOURS: i64 = 96;

/// Slot index of the peak in a full-span window.
pub const WINDOW_CENTER: usize = 16;
pub const WINDOW_LEN: usize = 2 * WINDOW_CENTER + 1;

/// Shape constants of the significance approximation for the maximum
/// t statistic.
const SIG_DELTA: f64 = 0.40;
const SIG_ETA_SLOPE: f64 = 4.19;
const SIG_ETA_INTERCEPT: f64 = -11.54;

pub const STORM_CSV_HEADER: [&str; 6] =
    ["storm_id", "start", "end", "peak_time", "peak_speed_ms", "n_points"];

/// A full-span window of grid slots around one selected peak. Slots beyond
/// the record are gap records.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateWindow {
    pub records: Vec<MetRecord>,
    pub peak_time: NaiveDateTime,
    pub peak_speed: f64,
}

impl CandidateWindow {
    pub fn center(&self) -> usize {
        self.records.len() / 2
    }

    pub fn speeds(&self) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.wind_speed).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentationConfig {
    /// Minimum significance for a cut to be accepted.
    pub p0: f64,
    /// Minimum number of points on either side of a cut.
    pub l0: usize,
    /// Floor on the pooled standard error, m/s.
    pub epsilon: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig { p0: 0.7, l0: 8, epsilon: 1e-9 }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p0 > 0.0 && self.p0 < 1.0) {
            return Err(Error::Config(format!("p0 must lie in (0, 1), got {}", self.p0)));
        }
        if self.l0 < 2 {
            return Err(Error::Config(format!("l0 must be at least 2, got {}", self.l0)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// The trimmed storm: a contiguous run of grid slots around the peak.
#[derive(Debug, Clone, PartialEq)]
pub struct StormSegment {
    pub storm_id: String,
    pub records: Vec<MetRecord>,
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
    pub peak_time: NaiveDateTime,
    pub peak_speed: f64,
}

impl StormSegment {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Direction observed at the peak, if any.
    pub fn peak_direction(&self) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.timestamp == self.peak_time)
            .and_then(|r| r.wind_dir)
    }
}

/// Identifier derived from the selected peak time.
pub fn storm_id(prefix: &str, peak_time: &NaiveDateTime) -> String {
    format!("{prefix}{}", peak_time.format("%Y%m%d%H"))
}

fn check_grid(records: &[MetRecord]) -> Result<()> {
    let step = Duration::hours(GRID_HOURS);
    for w in records.windows(2) {
        if w[1].timestamp - w[0].timestamp != step {
            return Err(Error::InvalidInput(format!(
                "records are not on a contiguous {GRID_HOURS}-hour grid at {}",
                timefmt::format(&w[1].timestamp)
            )));
        }
    }
    Ok(())
}

/// Selects independent peaks above `threshold` and cuts a window around
/// each. Windows are returned in chronological order.
///
/// `records` must be a contiguous 3-hour grid, as produced by
/// [`crate::ingest::quality_filter`]. A window running off either end of the
/// record is padded with gap slots and kept if at least `half + 1` of its
/// slots lie inside the record.
pub fn extract_candidate_windows(
    records: &[MetRecord],
    threshold: f64,
    span_hours: i64,
) -> Result<Vec<CandidateWindow>> {
    check_grid(records)?;
    if span_hours <= 0 || span_hours % (2 * GRID_HOURS) != 0 {
        return Err(Error::Config(format!(
            "span must be a positive multiple of {} hours, got {span_hours}",
            2 * GRID_HOURS
        )));
    }
    let half = (span_hours / (2 * GRID_HOURS)) as usize;
    let span_slots = half * 2;

    let mut candidates: Vec<(usize, f64)> = records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.wind_speed.filter(|&s| s > threshold).map(|s| (i, s)))
        .collect();
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut selected = BTreeSet::new();
    for (i, _) in candidates {
        let lo = i.saturating_sub(span_slots - 1);
        if selected.range(lo..i + span_slots).next().is_none() {
            selected.insert(i);
        }
    }

    let step = Duration::hours(GRID_HOURS);
    let mut windows = Vec::with_capacity(selected.len());
    for &i in &selected {
        let peak = records[i];
        let mut inside = 0;
        let slots: Vec<MetRecord> = (0..=2 * half)
            .map(|k| {
                let offset = k as i64 - half as i64;
                let j = i as i64 + offset;
                if j >= 0 && (j as usize) < records.len() {
                    inside += 1;
                    records[j as usize]
                } else {
                    MetRecord::gap(peak.timestamp + step * offset as i32)
                }
            })
            .collect();
        if inside < half + 1 {
            continue;
        }
        windows.push(CandidateWindow {
            records: slots,
            peak_time: peak.timestamp,
            peak_speed: peak.wind_speed.expect("candidate has a speed"),
        });
    }
    Ok(windows)
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (mean, if xs.len() > 1 { ss / (n - 1.0) } else { 0.0 })
}

/// Maximum two-sample t statistic over all cuts leaving at least `min_len`
/// points on each side.
///
/// A cut at `i` splits the series into `[0, i)` and `[i, n)`. The pooled
/// standard error uses sample variances and is floored at `epsilon`. Ties
/// go to the smallest index.
pub fn bg_split_statistic(series: &[f64], min_len: usize, epsilon: f64) -> Result<(usize, f64)> {
    let n = series.len();
    if min_len == 0 || n < 2 * min_len {
        return Err(Error::TooShortToSplit { len: n, min_len });
    }
    let mut best = (min_len, f64::NEG_INFINITY);
    for i in min_len..=n - min_len {
        let (left, right) = series.split_at(i);
        let (m1, v1) = mean_var(left);
        let (m2, v2) = mean_var(right);
        let (n1, n2) = (left.len() as f64, right.len() as f64);
        let pooled = ((n1 - 1.0) * v1 + (n2 - 1.0) * v2) / (n1 + n2 - 2.0);
        let sd = (pooled * (1.0 / n1 + 1.0 / n2)).sqrt().max(epsilon);
        let t = (m1 - m2).abs() / sd;
        if t > best.1 {
            best = (i, t);
        }
    }
    Ok(best)
}

/// Approximate probability that the maximum t statistic of a series of
/// length `n` stays below `t_max` under the no-change hypothesis:
/// `[1 - I_x(δν, δ)]^η` with `x = ν / (ν + t²)`, `ν = n - 2`, `δ = 0.4`,
/// `η = 4.19 ln n - 11.54` (floored at 1), and `I` the regularized
/// incomplete beta function.
pub fn bg_split_significance(t_max: f64, n: usize) -> f64 {
    debug_assert!(n >= 4, "significance needs at least four points");
    let nu = n as f64 - 2.0;
    let eta = (SIG_ETA_SLOPE * (n as f64).ln() + SIG_ETA_INTERCEPT).max(1.0);
    let x = if t_max.is_finite() { nu / (nu + t_max * t_max) } else { 0.0 };
    let ib = beta_reg(SIG_DELTA * nu, SIG_DELTA, x.clamp(0.0, 1.0));
    (1.0 - ib).max(0.0).powf(eta).clamp(0.0, 1.0)
}

/// Recursive segmentation of a speed series. Missing slots are skipped in
/// the statistics but keep their positions, so cut indices refer to slots
/// of the input. Returns sorted cut indices.
pub fn bg_segment(series: &[Option<f64>], config: &SegmentationConfig) -> Vec<usize> {
    let mut cuts = Vec::new();
    segment_range(series, 0, series.len(), config, &mut cuts);
    cuts.sort_unstable();
    cuts
}

fn segment_range(
    series: &[Option<f64>],
    lo: usize,
    hi: usize,
    config: &SegmentationConfig,
    cuts: &mut Vec<usize>,
) {
    let (slots, values): (Vec<usize>, Vec<f64>) = (lo..hi)
        .filter_map(|i| series[i].map(|v| (i, v)))
        .unzip();
    if values.len() < 2 * config.l0 || values.len() < 4 {
        return;
    }
    let Ok((k, t)) = bg_split_statistic(&values, config.l0, config.epsilon) else {
        return;
    };
    if bg_split_significance(t, values.len()) < config.p0 {
        return;
    }
    let cut = slots[k];
    cuts.push(cut);
    segment_range(series, lo, cut, config, cuts);
    segment_range(series, cut, hi, config, cuts);
}

/// Keeps the part of the window, between adjacent cuts or the window
/// edges, that contains the center slot. Gap slots at either end are
/// trimmed. The reported peak is the highest speed within the part.
pub fn finalize_storm(window: &CandidateWindow, boundaries: &[usize], id: String) -> StormSegment {
    let center = window.center();
    let lo = boundaries.iter().copied().filter(|&b| b <= center).max().unwrap_or(0);
    let hi = boundaries
        .iter()
        .copied()
        .filter(|&b| b > center)
        .min()
        .unwrap_or(window.records.len());
    let mut part = &window.records[lo..hi];
    while part.first().is_some_and(MetRecord::is_gap) {
        part = &part[1..];
    }
    while part.last().is_some_and(MetRecord::is_gap) {
        part = &part[..part.len() - 1];
    }
    let (peak_time, peak_speed) = part
        .iter()
        .filter_map(|r| r.wind_speed.map(|s| (r.timestamp, s)))
        .fold((window.peak_time, window.peak_speed), |best, (t, s)| {
            if s > best.1 {
                (t, s)
            } else {
                best
            }
        });
    StormSegment {
        storm_id: id,
        records: part.to_vec(),
        start: part[0].timestamp,
        end: part[part.len() - 1].timestamp,
        peak_time,
        peak_speed,
    }
}

/// Windowing, segmentation and trimming over a whole station stream.
pub fn extract_storms(
    records: &[MetRecord],
    threshold: f64,
    span_hours: i64,
    config: &SegmentationConfig,
    id_prefix: &str,
) -> Result<Vec<StormSegment>> {
    config.validate()?;
    let windows = extract_candidate_windows(records, threshold, span_hours)?;
    Ok(windows
        .iter()
        .map(|w| {
            let cuts = bg_segment(&w.speeds(), config);
            finalize_storm(w, &cuts, storm_id(id_prefix, &w.peak_time))
        })
        .collect())
}

pub fn write_storms_csv<W: Write>(storms: &[StormSegment], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STORM_CSV_HEADER)?;
    for s in storms {
        w.write_record([
            s.storm_id.clone(),
            timefmt::format(&s.start),
            timefmt::format(&s.end),
            timefmt::format(&s.peak_time),
            s.peak_speed.to_string(),
            s.len().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row of the storm CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct StormRow {
    pub storm_id: String,
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
    pub peak_time: NaiveDateTime,
    pub peak_speed: f64,
    pub n_points: usize,
}

pub fn read_storms_csv<R: Read>(input: R) -> Result<Vec<StormRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |what: &str| Error::Parse { line: i + 2, msg: format!("bad {what}") };
        if row.len() != STORM_CSV_HEADER.len() {
            return Err(bad("field count"));
        }
        out.push(StormRow {
            storm_id: row[0].to_string(),
            start: timefmt::parse(&row[1])?,
            end: timefmt::parse(&row[2])?,
            peak_time: timefmt::parse(&row[3])?,
            peak_speed: row[4].parse().map_err(|_| bad("peak_speed_ms"))?,
            n_points: row[5].parse().map_err(|_| bad("n_points"))?,
        });
    }
    Ok(out)
}

/// Rebuilds storm segments from their CSV rows by slicing a gridded record
/// stream between `start` and `end`.
pub fn slice_storms(records: &[MetRecord], rows: &[StormRow]) -> Result<Vec<StormSegment>> {
    rows.iter()
        .map(|row| {
            let lo = records.partition_point(|r| r.timestamp < row.start);
            let hi = records.partition_point(|r| r.timestamp <= row.end);
            if hi <= lo || hi - lo != row.n_points {
                return Err(Error::InvalidInput(format!(
                    "storm {} does not match the record stream ({} points expected, {} found)",
                    row.storm_id,
                    row.n_points,
                    hi.saturating_sub(lo)
                )));
            }
            Ok(StormSegment {
                storm_id: row.storm_id.clone(),
                records: records[lo..hi].to_vec(),
                start: row.start,
                end: row.end,
                peak_time: row.peak_time,
                peak_speed: row.peak_speed,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn grid(speeds: &[f64]) -> Vec<MetRecord> {
        let t0 = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        speeds
            .iter()
            .enumerate()
            .map(|(i, &s)| MetRecord {
                wind_speed: Some(s),
                ..MetRecord::gap(t0 + Duration::hours(3 * i as i64))
            })
            .collect()
    }

    #[test]
    fn single_peak_window() {
        let mut s = vec![5.0; 100];
        s[50] = 15.0;
        let w = extract_candidate_windows(&grid(&s), 12.0, 96).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].records.len(), WINDOW_LEN);
        assert_eq!(w[0].records[WINDOW_CENTER].wind_speed, Some(15.0));
        assert_eq!(w[0].peak_speed, 15.0);
    }

    #[test]
    fn nearby_lower_peak_suppressed() {
        let mut s = vec![5.0; 100];
        s[40] = 14.0;
        s[56] = 13.0; // 48 h later
        let w = extract_candidate_windows(&grid(&s), 12.0, 96).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].peak_speed, 14.0);
    }

    #[test]
    fn exactly_one_span_apart_both_kept() {
        let mut s = vec![5.0; 120];
        s[40] = 14.0;
        s[72] = 13.0; // 96 h later
        assert_eq!(extract_candidate_windows(&grid(&s), 12.0, 96).unwrap().len(), 2);
    }

    #[test]
    fn calm_record_has_no_windows() {
        assert!(extract_candidate_windows(&grid(&[11.9; 50]), 12.0, 96).unwrap().is_empty());
    }

    #[test]
    fn truncated_window_padding() {
        let mut s = vec![5.0; 30];
        s[3] = 20.0;
        let w = extract_candidate_windows(&grid(&s), 12.0, 96).unwrap();
        assert_eq!(w.len(), 1);
        assert!(w[0].records[..13].iter().all(MetRecord::is_gap));
        assert_eq!(w[0].records[16].wind_speed, Some(20.0));
        // Only 10 slots of record on a 33-slot window: dropped.
        let w = extract_candidate_windows(&grid(&s[..10]), 12.0, 96).unwrap();
        assert!(w.is_empty());
    }

    #[test]
    fn off_grid_input_rejected() {
        let mut g = grid(&[1.0, 2.0, 3.0]);
        g.remove(1);
        assert!(extract_candidate_windows(&g, 12.0, 96).is_err());
    }

    #[test]
    fn statistic_constant_series() {
        let (i, t) = bg_split_statistic(&[4.0; 16], 8, 1e-9).unwrap();
        assert_eq!((i, t), (8, 0.0));
    }

    #[test]
    fn statistic_ramp() {
        let s: Vec<f64> = (1..=8).map(f64::from).collect();
        let (i, t) = bg_split_statistic(&s, 4, 1e-9).unwrap();
        assert_eq!(i, 4);
        // |2.5 - 6.5| / sqrt(5/3 * (1/4 + 1/4))
        let expected = 4.0 / (5.0f64 / 6.0).sqrt();
        assert!((t - expected).abs() < 1e-12);
        assert!((t - 4.382).abs() < 1e-3);
    }

    #[test]
    fn statistic_guarded_step() {
        let mut s = vec![0.0; 8];
        s.extend([1.0; 8]);
        let (i, t) = bg_split_statistic(&s, 8, 1e-9).unwrap();
        assert_eq!(i, 8);
        assert!(t.is_finite() && t > 1e6);
    }

    #[test]
    fn statistic_too_short() {
        assert!(matches!(
            bg_split_statistic(&[1.0; 15], 8, 1e-9),
            Err(Error::TooShortToSplit { len: 15, min_len: 8 })
        ));
    }

    #[test]
    fn significance_limits() {
        for n in [4, 16, 33, 100] {
            assert_eq!(bg_split_significance(0.0, n), 0.0);
            assert!(bg_split_significance(1e9, n) > 1.0 - 1e-12);
            assert_eq!(bg_split_significance(f64::INFINITY, n), 1.0);
        }
    }

    #[test]
    fn significance_golden() {
        // Reference values from an independent incomplete-beta implementation.
        let cases = [
            (3.0, 33, 0.9721296448521575),
            (4.382, 8, 0.9909455547561933),
            (2.0, 16, 0.9239183427937447),
            (1.0, 33, 0.3196713415978419),
            (5.0, 33, 0.9996908816687511),
        ];
        for (t, n, p) in cases {
            let got = bg_split_significance(t, n);
            assert!((got - p).abs() < 1e-10, "t={t} n={n}: {got} vs {p}");
        }
    }

    #[test]
    fn segment_constant_has_no_cuts() {
        let s = vec![Some(10.0); 33];
        assert!(bg_segment(&s, &SegmentationConfig::default()).is_empty());
    }

    #[test]
    fn segment_clean_step() {
        let s: Vec<Option<f64>> = (0..33).map(|i| Some(if i < 17 { 8.0 } else { 16.0 })).collect();
        assert_eq!(bg_segment(&s, &SegmentationConfig::default()), vec![17]);
    }

    #[test]
    fn segment_short_series() {
        let s: Vec<Option<f64>> = (0..15).map(|i| Some(i as f64)).collect();
        assert!(bg_segment(&s, &SegmentationConfig::default()).is_empty());
    }

    #[test]
    fn segment_skips_missing_but_keeps_positions() {
        let mut s: Vec<Option<f64>> = (0..33).map(|i| Some(if i < 20 { 5.0 } else { 15.0 })).collect();
        s[2] = None;
        s[25] = None;
        assert_eq!(bg_segment(&s, &SegmentationConfig::default()), vec![20]);
    }

    fn window_of(speeds: &[f64]) -> CandidateWindow {
        let records = grid(speeds);
        CandidateWindow {
            peak_time: records[16].timestamp,
            peak_speed: speeds[16],
            records,
        }
    }

    #[test]
    fn finalize_without_cuts_keeps_window() {
        let w = window_of(&[10.0; 33]);
        let s = finalize_storm(&w, &[], "a".into());
        assert_eq!(s.len(), 33);
        assert_eq!(s.start, w.records[0].timestamp);
    }

    #[test]
    fn finalize_picks_center_part() {
        let mut speeds = vec![8.0; 33];
        speeds[16] = 20.0;
        let w = window_of(&speeds);
        let s = finalize_storm(&w, &[13], "a".into());
        assert_eq!((s.start, s.end), (w.records[13].timestamp, w.records[32].timestamp));
        let s = finalize_storm(&w, &[10, 24], "a".into());
        assert_eq!(s.len(), 14);
        assert_eq!(s.start, w.records[10].timestamp);
        assert_eq!(s.end, w.records[23].timestamp);
        assert_eq!(s.peak_speed, 20.0);
        assert_eq!(s.peak_time, w.records[16].timestamp);
    }

    #[test]
    fn storm_csv_round_trip() {
        let mut speeds = vec![5.0; 80];
        speeds[40] = 18.0;
        let recs = grid(&speeds);
        let storms = extract_storms(&recs, 12.0, 96, &SegmentationConfig::default(), "X").unwrap();
        let mut buf = Vec::new();
        write_storms_csv(&storms, &mut buf).unwrap();
        let rows = read_storms_csv(buf.as_slice()).unwrap();
        assert_eq!(slice_storms(&recs, &rows).unwrap(), storms);
    }

    proptest! {
        #[test]
        fn significance_monotone_in_t(n in 4usize..120) {
            let mut prev = 0.0;
            for k in 0..200 {
                let p = bg_split_significance(k as f64 * 0.05, n);
                prop_assert!(p + 1e-12 >= prev);
                prev = p;
            }
        }

        #[test]
        fn selected_peaks_are_independent(speeds in proptest::collection::vec(0.0f64..25.0, 1..400)) {
            let w = extract_candidate_windows(&grid(&speeds), 12.0, 96).unwrap();
            for (i, a) in w.iter().enumerate() {
                prop_assert!(a.peak_speed > 12.0);
                for b in &w[i + 1..] {
                    prop_assert!((b.peak_time - a.peak_time).num_hours().abs() >= 96);
                }
            }
        }

        #[test]
        fn cuts_leave_long_parts(speeds in proptest::collection::vec(0.0f64..25.0, 33)) {
            let s: Vec<Option<f64>> = speeds.into_iter().map(Some).collect();
            let cfg = SegmentationConfig::default();
            let cuts = bg_segment(&s, &cfg);
            let mut edges = vec![0];
            edges.extend(&cuts);
            edges.push(s.len());
            for w in edges.windows(2) {
                prop_assert!(w[1] - w[0] >= cfg.l0);
            }
        }
    }
}
