//! A scratch project directory with a config, driven through the binary.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

pub const BIN: &str = env!("CARGO_BIN_EXE_windclime");

/// Every stage, in pipeline order.
pub const STAGES: [&str; 11] = [
    "synth",
    "ingest",
    "segment",
    "featurize",
    "label-assist",
    "train",
    "evaluate",
    "cross-station",
    "evt",
    "curves",
    "report",
];

pub fn config(years: u32, extra: &str) -> String {
    format!(
        r#"[station]
id = "SYN"
latitude = 30.0
longitude = 122.0

[ingest]
inputs = ["out/synth_records.isd"]

[label_assist]
tracks = "tracks.csv"

[train]
labels = "out/synth_truth.csv"

[cross_station]
station = "SYN"
features = "out/features.csv"
labels = "out/synth_truth.csv"

[synth]
seed = 11
years = {years}
{extra}"#
    )
}

pub struct Project {
    pub dir: TempDir,
}

impl Project {
    pub fn new(config: &str) -> Project {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("windclime.toml"), config).unwrap();
        Project { dir }
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn config_path(&self) -> PathBuf {
        self.path().join("windclime.toml")
    }

    pub fn out(&self) -> PathBuf {
        self.path().join("out")
    }

    pub fn run(&self, args: &[&str]) -> Output {
        Command::new(BIN)
            .args(args)
            .arg("--config")
            .arg(self.config_path())
            .current_dir(self.path())
            .output()
            .unwrap()
    }

    /// Runs a stage and panics with its stderr unless it exits 0.
    pub fn stage(&self, stage: &str) -> String {
        let o = self.run(&[stage]);
        assert!(
            o.status.success(),
            "{stage} exited {:?}: {}",
            o.status.code(),
            String::from_utf8_lossy(&o.stderr)
        );
        if stage == "synth" {
            self.write_tracks();
        }
        String::from_utf8(o.stdout).unwrap()
    }

    pub fn run_all(&self) {
        for s in STAGES {
            self.stage(s);
        }
    }

    /// One track point 111 km north of the station at each planted
    /// typhoon's peak, so label-assist has something to match.
    fn write_tracks(&self) {
        let truth = fs::read_to_string(self.out().join("synth_truth.csv")).unwrap();
        let mut s = String::from("typhoon_id,timestamp,lat,lon\n");
        for line in truth.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols[1] != "typhoon" {
                continue;
            }
            let p = &cols[0][cols[0].len() - 10..];
            s += &format!("{},{}-{}-{}T{}:00:00Z,31.0,122.0\n", cols[0], &p[..4], &p[4..6], &p[6..8], &p[8..]);
        }
        fs::write(self.path().join("tracks.csv"), s).unwrap();
    }

    pub fn read(&self, name: &str) -> String {
        fs::read_to_string(self.out().join(name)).unwrap()
    }

    pub fn csv_rows(&self, name: &str) -> Vec<Vec<String>> {
        let mut r = csv::Reader::from_path(self.out().join(name)).unwrap();
        r.records().map(|row| row.unwrap().iter().map(str::to_string).collect()).collect()
    }

    /// SHA-256 of every file in the output directory.
    pub fn hashes(&self) -> BTreeMap<String, String> {
        hash_dir(&self.out())
    }
}

pub fn hash_dir(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let Ok(entries) = fs::read_dir(dir) else { return out };
    for e in entries {
        let e = e.unwrap();
        let bytes = fs::read(e.path()).unwrap();
        out.insert(e.file_name().to_string_lossy().into_owned(), hex::encode(Sha256::digest(&bytes)));
    }
    out
}
