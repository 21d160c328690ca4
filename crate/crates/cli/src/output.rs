//! Stage outputs are staged in memory and committed together, so a
//! failing stage leaves no partial files behind.

use std::fs;
use std::path::{Path, PathBuf};

use windclime::{Error, Result};

pub struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Outputs { dir: dir.to_path_buf(), files: Vec::new() }
    }

    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    /// Stages a file produced by a writer callback.
    pub fn write(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.add(name, buf);
        Ok(())
    }

    pub fn json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut buf = serde_json::to_vec_pretty(value).map_err(|e| Error::Artifact(e.to_string()))?;
        buf.push(b'\n');
        self.add(name, buf);
        Ok(())
    }

    /// Writes every file to a temporary name, then renames them into place.
    pub fn commit(self) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(&self.dir)?;
        let mut staged = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let tmp = self.dir.join(format!(".{name}.tmp"));
            if let Err(e) = fs::write(&tmp, bytes) {
                for (t, _) in &staged {
                    let _ = fs::remove_file(t);
                }
                return Err(e.into());
            }
            staged.push((tmp, self.dir.join(name)));
        }
        let mut done = Vec::with_capacity(staged.len());
        for (tmp, path) in staged {
            fs::rename(&tmp, &path)?;
            done.push(path);
        }
        Ok(done)
    }
}

/// Path of an upstream artifact, or an error naming the stage that makes it.
pub fn require(dir: &Path, name: &str, producer: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(Error::Artifact(format!(
            "missing upstream artifact {} (run the `{producer}` stage first)",
            p.display()
        )))
    }
}

pub fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| Error::Artifact(format!("cannot open {}: {e}", path.display())))
}
