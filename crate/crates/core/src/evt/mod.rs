//! Extreme wind speeds per wind type and for the mixed climate.
//!
//! Each storm contributes one sample, its peak speed. Per type `x` the
//! samples define an event distribution `F_x` and an annual rate `N_x`
//! (events per year). Typhoon maxima are fitted with a Gumbel law, monsoon
//! and other maxima with a GPD over the threshold.
//!
//! * Per-event return level: `P(v_x ≥ V) = 1 / (T N_x)`, see [`return_level`].
//! * Annual distribution: `F_ann,x(V) = exp(-N_x (1 - F_x(V)))`.
//! * Mixed climate: the annual maximum over independent types has CDF
//!   `Π_x F_ann,x(V)`, solved for `V(T)` by bisection in [`mixture_level`].
//!
//! The commingled reference curve fits a Gumbel law to plain annual maxima
//! of all records, ignoring type.

mod gpd;
mod gumbel;

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

pub use gpd::{fit_gpd, GpdFit, GpdMethod, SHAPE_BOUNDS};
pub use gumbel::{fit_gumbel, GumbelFit};

use crate::features::WindType;
use crate::ingest::{MetRecord, GRID_HOURS};
use crate::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 12.0;
/// Upper end of the bisection bracket for mixture levels, m/s.
pub const MIXTURE_UPPER: f64 = 200.0;
pub const MIXTURE_TOL: f64 = 1e-4;
pub const GRID_POINTS: usize = 30;
pub const GRID_MAX_YEARS: f64 = 1000.0;
/// Minimum number of qualifying years for the commingled fit.
pub const MIN_ANNUAL_YEARS: usize = 10;
/// Fraction of valid speed observations for a year to qualify.
pub const MIN_YEAR_COVERAGE: f64 = 0.5;

/// A distribution of per-event maxima.
pub trait EventDistribution {
    fn cdf(&self, v: f64) -> f64;
    fn quantile(&self, p: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "distribution", rename_all = "lowercase")]
pub enum TypeFit {
    Gumbel(GumbelFit),
    Gpd(GpdFit),
}

impl TypeFit {
    pub fn name(&self) -> &'static str {
        match self {
            TypeFit::Gumbel(_) => "gumbel",
            TypeFit::Gpd(_) => "gpd",
        }
    }
}

impl EventDistribution for TypeFit {
    fn cdf(&self, v: f64) -> f64 {
        match self {
            TypeFit::Gumbel(f) => f.cdf(v),
            TypeFit::Gpd(f) => f.cdf(v),
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        match self {
            TypeFit::Gumbel(f) => f.quantile(p),
            TypeFit::Gpd(f) => f.quantile(p),
        }
    }
}

/// Speed with per-event exceedance probability `1 / (T N)`.
///
/// For a Gumbel fit this is `μ - β ln(-ln(1 - 1/(TN)))`; for a GPD
/// `u + (σ/ξ)((TN)^ξ - 1)`, or `u + σ ln(TN)` when ξ = 0.
pub fn return_level<D: EventDistribution + ?Sized>(fit: &D, rate: f64, period: f64) -> Result<f64> {
    let tn = period * rate;
    if !(tn > 1.0) {
        return Err(Error::ReturnPeriodTooShort(tn));
    }
    Ok(fit.quantile(1.0 - 1.0 / tn))
}

/// Poisson-annualized CDF of the yearly maximum.
pub fn annual_cdf<D: EventDistribution + ?Sized>(fit: &D, rate: f64, v: f64) -> f64 {
    (-rate * (1.0 - fit.cdf(v))).exp()
}

/// Speed whose Poisson-annualized exceedance probability is `1/T`, or
/// `None` when that speed lies below `floor` or `T ≤ 1`.
pub fn annualized_level<D: EventDistribution + ?Sized>(
    fit: &D,
    rate: f64,
    period: f64,
    floor: f64,
) -> Option<f64> {
    if !(period > 1.0) {
        return None;
    }
    let p = 1.0 + (-1.0 / period).ln_1p() / rate;
    if !(p > 0.0) {
        return None;
    }
    let v = fit.quantile(p);
    (v >= floor).then_some(v)
}

/// One fitted wind type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeModel {
    pub wind_type: WindType,
    pub fit: TypeFit,
    /// Events per year.
    pub rate: f64,
    pub n_samples: usize,
}

/// Solves `1 - Π F_ann,x(V) = 1/T` by bisection on `[lower, upper]`.
/// The upper end of the final bracket is returned, so the level never
/// falls below the exact root (and hence below any component level).
///
/// Returns `Ok(None)` when the solution lies below `lower` (the threshold)
/// and an error when it lies above `upper`. With no components every
/// period is inapplicable.
pub fn mixture_level(components: &[TypeModel], period: f64, lower: f64, upper: f64) -> Result<Option<f64>> {
    if components.is_empty() || !(period > 1.0) {
        return Ok(None);
    }
    let target = 1.0 - 1.0 / period;
    let cdf = |v: f64| components.iter().map(|c| annual_cdf(&c.fit, c.rate, v)).product::<f64>();
    if cdf(lower) >= target {
        return Ok(None);
    }
    if cdf(upper) < target {
        return Err(Error::NoBracket { period, upper });
    }
    let (mut lo, mut hi) = (lower, upper);
    while hi - lo >= MIXTURE_TOL {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(hi))
}

/// `GRID_POINTS` log-spaced return periods over [1, 1000] years.
pub fn return_period_grid() -> Vec<f64> {
    let n = GRID_POINTS - 1;
    (0..=n)
        .map(|i| {
            if i == n {
                GRID_MAX_YEARS
            } else {
                GRID_MAX_YEARS.powf(i as f64 / n as f64)
            }
        })
        .collect()
}

/// Per-type storm maxima and annual rates.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeSamples {
    pub threshold: f64,
    pub record_years: f64,
    pub samples: BTreeMap<WindType, Vec<f64>>,
}

impl TypeSamples {
    pub fn count(&self, t: WindType) -> usize {
        self.samples.get(&t).map_or(0, Vec::len)
    }

    pub fn rate(&self, t: WindType) -> f64 {
        self.count(t) as f64 / self.record_years
    }
}

/// Groups one peak speed per labeled storm by type. Peaks below the
/// threshold are dropped.
pub fn build_type_samples(
    storms: &[(f64, WindType)],
    record_years: f64,
    threshold: f64,
) -> Result<TypeSamples> {
    if !(record_years > 0.0) {
        return Err(Error::Config(format!("record_years must be positive, got {record_years}")));
    }
    let mut samples: BTreeMap<WindType, Vec<f64>> = BTreeMap::new();
    for &(speed, t) in storms {
        if speed >= threshold {
            samples.entry(t).or_default().push(speed);
        }
    }
    Ok(TypeSamples { threshold, record_years, samples })
}

/// Fits every type with enough samples: Gumbel for typhoons, GPD over
/// the threshold otherwise. Types that cannot be fitted are reported in
/// the returned notices and left out.
pub fn fit_type_models(samples: &TypeSamples) -> Result<(Vec<TypeModel>, Vec<String>)> {
    let mut models = Vec::new();
    let mut notices = Vec::new();
    for t in WindType::ALL {
        let Some(xs) = samples.samples.get(&t).filter(|v| !v.is_empty()) else {
            notices.push(format!("{t}: no samples"));
            continue;
        };
        let fit = match t {
            WindType::Typhoon => fit_gumbel(xs).map(TypeFit::Gumbel),
            _ => fit_gpd(xs, samples.threshold).map(TypeFit::Gpd),
        };
        match fit {
            Ok(fit) => models.push(TypeModel {
                wind_type: t,
                fit,
                rate: samples.rate(t),
                n_samples: xs.len(),
            }),
            Err(e) if e.is_numeric() => return Err(e),
            Err(e) => notices.push(format!("{t}: not fitted ({e})")),
        }
    }
    Ok((models, notices))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnualMax {
    pub year: i32,
    pub speed: f64,
}

fn slots_in_year(year: i32) -> usize {
    let days = NaiveDate::from_ymd_opt(year, 12, 31).expect("valid year").ordinal() as usize;
    days * (24 / GRID_HOURS as usize)
}

/// Maximum speed of every calendar year with at least half of its 3-hour
/// slots observed. Fails with fewer than ten such years.
pub fn commingled_annual_max(records: &[MetRecord]) -> Result<Vec<AnnualMax>> {
    let mut years: BTreeMap<i32, (usize, f64)> = BTreeMap::new();
    for r in records {
        if let Some(s) = r.wind_speed {
            let e = years.entry(r.timestamp.year()).or_insert((0, f64::NEG_INFINITY));
            e.0 += 1;
            e.1 = e.1.max(s);
        }
    }
    let out: Vec<AnnualMax> = years
        .into_iter()
        .filter(|&(y, (count, _))| count as f64 >= MIN_YEAR_COVERAGE * slots_in_year(y) as f64)
        .map(|(year, (_, speed))| AnnualMax { year, speed })
        .collect();
    if out.len() < MIN_ANNUAL_YEARS {
        return Err(Error::InvalidInput(format!(
            "commingled fit needs {MIN_ANNUAL_YEARS} years with at least {:.0}% coverage, found {}",
            MIN_YEAR_COVERAGE * 100.0,
            out.len()
        )));
    }
    Ok(out)
}

/// Gumbel fit of the commingled annual maxima.
pub fn fit_commingled(records: &[MetRecord]) -> Result<GumbelFit> {
    let maxima: Vec<f64> = commingled_annual_max(records)?.iter().map(|m| m.speed).collect();
    fit_gumbel(&maxima)
}

/// Everything needed to draw the return-period curves.
#[derive(Debug, Clone, PartialEq)]
pub struct EvtModel {
    pub threshold: f64,
    pub types: Vec<TypeModel>,
    pub commingled: Option<GumbelFit>,
}

impl EvtModel {
    pub fn get(&self, t: WindType) -> Option<&TypeModel> {
        self.types.iter().find(|m| m.wind_type == t)
    }
}

/// Wind speed against return period, one column per curve. `None` marks
/// a period where the curve is not defined (below the threshold, or
/// `T ≤ 1` for per-event curves).
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnCurve {
    pub periods: Vec<f64>,
    pub monsoon: Vec<Option<f64>>,
    pub typhoon: Vec<Option<f64>>,
    pub other: Vec<Option<f64>>,
    pub commingled: Vec<Option<f64>>,
    pub mixture: Vec<Option<f64>>,
}

impl ReturnCurve {
    pub fn column(&self, t: WindType) -> &[Option<f64>] {
        match t {
            WindType::Typhoon => &self.typhoon,
            WindType::Monsoon => &self.monsoon,
            WindType::Other => &self.other,
        }
    }
}

/// Mixture column over a grid of periods.
pub fn mixture_curve(types: &[TypeModel], threshold: f64, periods: &[f64]) -> Result<Vec<Option<f64>>> {
    periods
        .iter()
        .map(|&t| mixture_level(types, t, threshold, MIXTURE_UPPER))
        .collect()
}

/// All five curves. Per-type columns use the same Poisson annualization as
/// the mixture so the columns are directly comparable; the commingled
/// column is an annual-maximum curve (`N = 1`).
pub fn return_curves(model: &EvtModel, periods: &[f64]) -> Result<ReturnCurve> {
    let per_type = |t: WindType| -> Vec<Option<f64>> {
        periods
            .iter()
            .map(|&p| {
                model
                    .get(t)
                    .and_then(|m| annualized_level(&m.fit, m.rate, p, model.threshold))
            })
            .collect()
    };
    let commingled = periods
        .iter()
        .map(|&p| model.commingled.and_then(|g| return_level(&g, 1.0, p).ok()))
        .collect();
    Ok(ReturnCurve {
        periods: periods.to_vec(),
        monsoon: per_type(WindType::Monsoon),
        typhoon: per_type(WindType::Typhoon),
        other: per_type(WindType::Other),
        commingled,
        mixture: mixture_curve(&model.types, model.threshold, periods)?,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const CURVES_CSV_HEADER: [&str; 6] = [
    "return_period_years",
    "v_monsoon",
    "v_typhoon",
    "v_other",
    "v_commingled",
    "v_mixture",
];

pub fn write_curves_csv<W: Write>(curve: &ReturnCurve, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CURVES_CSV_HEADER)?;
    for i in 0..curve.periods.len() {
        w.write_record([
            curve.periods[i].to_string(),
            cell(curve.monsoon[i]),
            cell(curve.typhoon[i]),
            cell(curve.other[i]),
            cell(curve.commingled[i]),
            cell(curve.mixture[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const FITS_CSV_HEADER: [&str; 10] = [
    "type",
    "distribution",
    "location",
    "scale",
    "shape",
    "threshold",
    "rate_per_year",
    "n_samples",
    "method",
    "clamped",
];

/// Fit summary, one row per fitted type plus the commingled fit.
pub fn write_fits_csv<W: Write>(model: &EvtModel, commingled_years: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FITS_CSV_HEADER)?;
    for m in &model.types {
        let row = match m.fit {
            TypeFit::Gumbel(g) => [
                m.wind_type.to_string(),
                "gumbel".into(),
                g.location.to_string(),
                g.scale.to_string(),
                String::new(),
                model.threshold.to_string(),
                m.rate.to_string(),
                m.n_samples.to_string(),
                "mle".into(),
                "false".into(),
            ],
            TypeFit::Gpd(g) => [
                m.wind_type.to_string(),
                "gpd".into(),
                String::new(),
                g.scale.to_string(),
                g.shape.to_string(),
                g.threshold.to_string(),
                m.rate.to_string(),
                m.n_samples.to_string(),
                match g.method {
                    GpdMethod::Mle => "mle".into(),
                    GpdMethod::Pwm => "pwm".into(),
                },
                g.clamped.to_string(),
            ],
        };
        w.write_record(&row)?;
    }
    if let Some(g) = model.commingled {
        w.write_record([
            "commingled".to_string(),
            "gumbel".into(),
            g.location.to_string(),
            g.scale.to_string(),
            String::new(),
            model.threshold.to_string(),
            "1".into(),
            commingled_years.to_string(),
            "mle".into(),
            "false".into(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_fits_csv<R: Read>(input: R) -> Result<EvtModel> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut types = Vec::new();
    let mut commingled = None;
    let mut threshold = None;
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let bad = |what: &str| Error::Parse { line, msg: format!("bad {what}") };
        if row.len() != FITS_CSV_HEADER.len() {
            return Err(bad("field count"));
        }
        let num = |j: usize| row[j].parse::<f64>().map_err(|_| bad(FITS_CSV_HEADER[j]));
        threshold = Some(num(5)?);
        if &row[0] == "commingled" {
            commingled = Some(GumbelFit::new(num(2)?, num(3)?)?);
            continue;
        }
        let wind_type: WindType = row[0].parse()?;
        let fit = match &row[1] {
            "gumbel" => TypeFit::Gumbel(GumbelFit::new(num(2)?, num(3)?)?),
            "gpd" => TypeFit::Gpd(GpdFit {
                method: if &row[8] == "pwm" { GpdMethod::Pwm } else { GpdMethod::Mle },
                clamped: &row[9] == "true",
                ..GpdFit::new(num(4)?, num(3)?, num(5)?)?
            }),
            _ => return Err(bad("distribution")),
        };
        types.push(TypeModel {
            wind_type,
            fit,
            rate: num(6)?,
            n_samples: row[7].parse().map_err(|_| bad("n_samples"))?,
        });
    }
    Ok(EvtModel {
        threshold: threshold.unwrap_or(DEFAULT_THRESHOLD),
        types,
        commingled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Duration;

    fn gpd(shape: f64, scale: f64) -> TypeFit {
        TypeFit::Gpd(GpdFit::new(shape, scale, 12.0).unwrap())
    }

    fn model(t: WindType, fit: TypeFit, rate: f64) -> TypeModel {
        TypeModel { wind_type: t, fit, rate, n_samples: 100 }
    }

    #[test]
    fn closed_form_levels() {
        let v = return_level(&gpd(0.0, 4.0), 10.0, 50.0).unwrap();
        assert!((v - (12.0 + 4.0 * 500f64.ln())).abs() < 1e-9);
        assert!((v - 36.86).abs() < 0.01);
        let g = GumbelFit::new(30.0, 3.0).unwrap();
        let v = return_level(&g, 1.0, 2.0).unwrap();
        assert!((v - (30.0 - 3.0 * (-(0.5f64).ln()).ln())).abs() < 1e-9);
        assert!((v - 31.10).abs() < 0.01);
        let v = return_level(&gpd(0.2, 4.0), 5.0, 100.0).unwrap();
        assert!((v - (12.0 + 4.0 / 0.2 * (500f64.powf(0.2) - 1.0))).abs() < 1e-9);
    }

    #[test]
    fn short_period_rejected() {
        assert!(matches!(
            return_level(&gpd(0.0, 4.0), 0.5, 2.0),
            Err(Error::ReturnPeriodTooShort(_))
        ));
    }

    #[test]
    fn quantile_round_trip() {
        let fits = [
            gpd(0.0, 4.0),
            gpd(0.3, 2.0),
            gpd(-0.4, 6.0),
            TypeFit::Gumbel(GumbelFit::new(28.0, 4.0).unwrap()),
        ];
        for fit in fits {
            for rate in [0.5, 1.0, 7.0] {
                for t in [2.5, 10.0, 100.0, 1000.0] {
                    let v = return_level(&fit, rate, t).unwrap();
                    let target = 1.0 - 1.0 / (t * rate);
                    assert!((fit.cdf(v) - target).abs() < 1e-9, "{fit:?} {rate} {t}");
                }
            }
        }
    }

    #[test]
    fn three_equal_factors() {
        // Each annual CDF 0.98 at V: mixture CDF 0.98^3.
        let p = 0.98f64.powi(3);
        assert!((p - 0.941192).abs() < 1e-12);
        assert!((1.0 / (1.0 - p) - 17.0).abs() < 0.01);
        let fit = gpd(0.0, 4.0);
        let rate = 2.0;
        let v = annualized_level(&fit, rate, 50.0, 12.0).unwrap();
        let comps: Vec<_> = WindType::ALL.iter().map(|&t| model(t, fit, rate)).collect();
        let mixed: f64 = comps.iter().map(|c| annual_cdf(&c.fit, c.rate, v)).product();
        assert!((mixed - p).abs() < 1e-12);
    }

    #[test]
    fn single_type_mixture_matches_annualized_curve() {
        let m = model(WindType::Monsoon, gpd(0.1, 3.0), 4.0);
        for t in return_period_grid() {
            let a = annualized_level(&m.fit, m.rate, t, 12.0);
            let b = mixture_level(&[m], t, 12.0, MIXTURE_UPPER).unwrap();
            match (a, b) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-4),
                (None, None) => {}
                other => panic!("T={t}: {other:?}"),
            }
        }
    }

    #[test]
    fn no_bracket_error() {
        let m = model(WindType::Other, gpd(0.5, 30.0), 10.0);
        assert!(matches!(
            mixture_level(&[m], 1000.0, 12.0, MIXTURE_UPPER),
            Err(Error::NoBracket { .. })
        ));
    }

    #[test]
    fn grid_shape() {
        let g = return_period_grid();
        assert_eq!(g.len(), 30);
        assert_eq!(g[0], 1.0);
        assert_eq!(g[29], 1000.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn type_sample_rates() {
        let mut storms = vec![(20.0, WindType::Typhoon); 27];
        storms.extend(vec![(14.0, WindType::Monsoon); 54]);
        storms.push((11.0, WindType::Other));
        let s = build_type_samples(&storms, 27.0, 12.0).unwrap();
        assert_eq!(s.rate(WindType::Typhoon), 1.0);
        assert_eq!(s.rate(WindType::Monsoon), 2.0);
        assert_eq!(s.count(WindType::Other), 0);
    }

    fn yearly(maxima: &[f64]) -> Vec<MetRecord> {
        let mut out = Vec::new();
        for (k, &m) in maxima.iter().enumerate() {
            let y = 2000 + k as i32;
            let t0 = NaiveDate::from_ymd_opt(y, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
            let n = slots_in_year(y);
            for i in 0..n {
                let s = if i == n / 3 { m } else { 3.0 + (i % 5) as f64 };
                out.push(MetRecord { wind_speed: Some(s), ..MetRecord::gap(t0 + Duration::hours(3 * i as i64)) });
            }
        }
        out
    }

    #[test]
    fn annual_maxima_exact() {
        let maxima = [21.0, 25.5, 19.0, 30.2, 22.0, 24.0, 27.5, 18.5, 23.0, 26.0, 20.5];
        let got: Vec<f64> = commingled_annual_max(&yearly(&maxima)).unwrap().iter().map(|m| m.speed).collect();
        assert_eq!(got, maxima);
    }

    #[test]
    fn sparse_years_excluded() {
        let mut recs = yearly(&[21.0; 12]);
        // Knock out most of the first year.
        for r in recs.iter_mut().take(2000) {
            r.wind_speed = None;
        }
        let got = commingled_annual_max(&recs).unwrap();
        assert_eq!(got.len(), 11);
        assert_eq!(got[0].year, 2001);
        assert!(commingled_annual_max(&yearly(&[21.0; 9])).is_err());
    }

    #[test]
    fn constant_maxima_fail_the_fit() {
        assert!(matches!(fit_commingled(&yearly(&[15.0; 12])), Err(Error::Degenerate(_))));
    }

    #[test]
    fn fits_csv_round_trip() {
        let m = EvtModel {
            threshold: 12.0,
            types: vec![
                model(WindType::Typhoon, TypeFit::Gumbel(GumbelFit::new(25.1, 3.3).unwrap()), 1.2),
                model(WindType::Monsoon, gpd(0.05, 2.7), 6.3),
            ],
            commingled: Some(GumbelFit::new(24.0, 2.9).unwrap()),
        };
        let mut buf = Vec::new();
        write_fits_csv(&m, 27, &mut buf).unwrap();
        assert_eq!(read_fits_csv(buf.as_slice()).unwrap(), m);
    }
}
