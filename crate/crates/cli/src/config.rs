//! Pipeline configuration: a TOML file with one section per stage.
//!
//! Relative paths are resolved against the directory holding the config
//! file, so a config and its data can move together.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use windclime::learn::{ClassifierKind, Hyperparams};
use windclime::storms::SegmentationConfig;
use windclime::synth::SynthSpec;
use windclime::terrain::RoughnessTable;
use windclime::{Error, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub station: StationSection,
    #[serde(default)]
    pub ingest: IngestSection,
    #[serde(default)]
    pub segment: SegmentSection,
    #[serde(default)]
    pub label_assist: LabelAssistSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub cross_station: Option<CrossStationSection>,
    #[serde(default)]
    pub evt: EvtSection,
    #[serde(default)]
    pub synth: SynthSection,
    #[serde(default)]
    pub output: OutputSection,
    /// Directory of the config file; not part of the file itself.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum RoughnessSpec {
    /// `identity`, `dinghai`, `dachen_island` or `shengzhou`.
    Preset(String),
    /// Sector edge in degrees (`"30"` … `"360"`) to factor.
    Table(BTreeMap<String, f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationSection {
    pub id: String,
    pub latitude: f64,
    pub longitude: f64,
    /// Inferred from the ingested record span when absent.
    pub record_years: Option<f64>,
    #[serde(default = "default_roughness")]
    pub roughness: RoughnessSpec,
}

fn default_roughness() -> RoughnessSpec {
    RoughnessSpec::Preset("identity".into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    #[default]
    IsdLite,
    Csv,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct IngestSection {
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    #[serde(default)]
    pub format: InputFormat,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentSection {
    pub threshold: f64,
    pub span_hours: i64,
    pub p0: f64,
    pub l0: usize,
}

impl Default for SegmentSection {
    fn default() -> Self {
        let s = SegmentationConfig::default();
        SegmentSection {
            threshold: windclime::storms::DEFAULT_THRESHOLD,
            span_hours: windclime::storms::DEFAULT_SPAN_HOURS,
            p0: s.p0,
            l0: s.l0,
        }
    }
}

impl SegmentSection {
    pub fn segmentation(&self) -> SegmentationConfig {
        SegmentationConfig { p0: self.p0, l0: self.l0, ..SegmentationConfig::default() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelAssistSection {
    pub tracks: Option<PathBuf>,
    pub radius_km: f64,
}

impl Default for LabelAssistSection {
    fn default() -> Self {
        LabelAssistSection { tracks: None, radius_km: windclime::features::DEFAULT_TRACK_RADIUS_KM }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    /// `storm_id,label` CSV; extra columns are ignored.
    pub labels: Option<PathBuf>,
    pub classifier: ClassifierKind,
    pub train_ratio: f64,
    pub cv_folds: usize,
    pub cv_classifiers: Vec<ClassifierKind>,
    pub seed: u64,
    pub hyperparams: Hyperparams,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            labels: None,
            classifier: ClassifierKind::Svm,
            train_ratio: 0.7,
            cv_folds: 10,
            cv_classifiers: ClassifierKind::ALL.to_vec(),
            seed: 42,
            hyperparams: Hyperparams::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossStationSection {
    pub station: String,
    /// Features CSV of the other station, same schema as `features.csv`.
    pub features: PathBuf,
    pub labels: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvtSection {
    pub threshold: f64,
}

impl Default for EvtSection {
    fn default() -> Self {
        EvtSection { threshold: windclime::evt::DEFAULT_THRESHOLD }
    }
}

/// `seed` plus the generator spec's keys in one table. Parsed by hand
/// because serde's `flatten` would let misspelled spec keys through.
#[derive(Debug, Clone, Deserialize)]
#[serde(try_from = "toml::Table")]
pub struct SynthSection {
    pub seed: u64,
    pub spec: SynthSpec,
}

impl TryFrom<toml::Table> for SynthSection {
    type Error = String;

    fn try_from(mut t: toml::Table) -> std::result::Result<Self, String> {
        let seed = match t.remove("seed") {
            None => SynthSection::default().seed,
            Some(toml::Value::Integer(s)) if s >= 0 => s as u64,
            Some(v) => return Err(format!("synth.seed must be a non-negative integer, got {v}")),
        };
        let spec = SynthSpec::deserialize(toml::Value::Table(t)).map_err(|e| e.to_string())?;
        Ok(SynthSection { seed, spec })
    }
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection { seed: 1, spec: SynthSpec::default() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Config =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() { p.to_path_buf() } else { self.base_dir.join(p) }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }

    /// Applies `--seed` to every seeded stage.
    pub fn override_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.synth.seed = seed;
    }

    pub fn roughness(&self) -> Result<RoughnessTable> {
        match &self.station.roughness {
            RoughnessSpec::Preset(name) => match name.as_str() {
                "identity" => Ok(RoughnessTable::identity()),
                "dinghai" => Ok(RoughnessTable::dinghai()),
                "dachen_island" => Ok(RoughnessTable::dachen_island()),
                "shengzhou" => Ok(RoughnessTable::shengzhou()),
                other => Err(Error::Config(format!("unknown roughness preset {other:?}"))),
            },
            RoughnessSpec::Table(t) => {
                let entries = t
                    .iter()
                    .map(|(k, v)| {
                        k.trim()
                            .parse::<u32>()
                            .map(|s| (s, *v))
                            .map_err(|_| Error::Config(format!("roughness sector {k:?} is not a number")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                RoughnessTable::from_entries(entries)
            }
        }
    }

    /// Range checks plus existence of every referenced input file.
    pub fn validate(&self) -> Result<()> {
        self.validate_values()?;
        let mut inputs: Vec<&PathBuf> = self.ingest.inputs.iter().collect();
        inputs.extend(&self.label_assist.tracks);
        inputs.extend(&self.train.labels);
        if let Some(cs) = &self.cross_station {
            inputs.push(&cs.features);
            inputs.push(&cs.labels);
        }
        for p in inputs {
            let full = self.resolve(p);
            if !full.is_file() {
                return Err(Error::Config(format!("input file {} does not exist", full.display())));
            }
        }
        Ok(())
    }

    /// Range checks only; stages check their own inputs when reading.
    pub fn validate_values(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let st = &self.station;
        if st.id.trim().is_empty() || st.id.contains([',', '/', '\\']) {
            return bad(format!("station.id {:?} must be non-empty without , / or \\", st.id));
        }
        if !(-90.0..=90.0).contains(&st.latitude) || !(-180.0..=180.0).contains(&st.longitude) {
            return bad("station coordinates out of range".into());
        }
        if st.record_years.is_some_and(|y| !(y > 0.0)) {
            return bad("station.record_years must be positive".into());
        }
        self.roughness()?;
        let sg = &self.segment;
        if !(sg.threshold > 0.0) || sg.span_hours < 3 {
            return bad("segment.threshold must be positive and span_hours at least 3".into());
        }
        self.segment.segmentation().validate()?;
        if !(self.label_assist.radius_km > 0.0) {
            return bad("label_assist.radius_km must be positive".into());
        }
        let tr = &self.train;
        if !(tr.train_ratio > 0.0 && tr.train_ratio < 1.0) {
            return bad("train.train_ratio must lie in (0, 1)".into());
        }
        if tr.cv_folds < 2 {
            return bad("train.cv_folds must be at least 2".into());
        }
        tr.hyperparams.validate()?;
        if !(self.evt.threshold > 0.0) {
            return bad("evt.threshold must be positive".into());
        }
        self.synth.spec.validate()
    }
}
