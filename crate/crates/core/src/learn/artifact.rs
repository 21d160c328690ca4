//! Versioned, self-checking JSON serialization of trained classifiers.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::TrainedClassifier;
use crate::{Error, Result};

pub const ARTIFACT_FORMAT: &str = "windclime-classifier";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<M> {
    format: String,
    version: u32,
    /// SHA-256 of the compact JSON encoding of `model`.
    sha256: String,
    model: M,
}

fn digest(model: &TrainedClassifier) -> Result<String> {
    let bytes = serde_json::to_vec(model).map_err(|e| Error::Artifact(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

pub fn write_model<W: Write>(model: &TrainedClassifier, mut out: W) -> Result<()> {
    let env = Envelope {
        format: ARTIFACT_FORMAT.into(),
        version: ARTIFACT_VERSION,
        sha256: digest(model)?,
        model,
    };
    serde_json::to_writer_pretty(&mut out, &env).map_err(|e| Error::Artifact(e.to_string()))?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Rejects other formats, other versions and content whose hash does not
/// match the recorded one.
pub fn read_model<R: Read>(input: R) -> Result<TrainedClassifier> {
    let env: Envelope<serde_json::Value> =
        serde_json::from_reader(input).map_err(|e| Error::Artifact(format!("malformed model file: {e}")))?;
    if env.format != ARTIFACT_FORMAT {
        return Err(Error::Artifact(format!("unexpected artifact format {:?}", env.format)));
    }
    if env.version != ARTIFACT_VERSION {
        return Err(Error::Artifact(format!(
            "model format version {} is not supported (expected {ARTIFACT_VERSION})",
            env.version
        )));
    }
    let model: TrainedClassifier =
        serde_json::from_value(env.model).map_err(|e| Error::Artifact(format!("malformed model: {e}")))?;
    let actual = digest(&model)?;
    if actual != env.sha256 {
        return Err(Error::Artifact(format!(
            "model content hash mismatch: recorded {}, computed {actual}",
            env.sha256
        )));
    }
    Ok(model)
}

pub fn save_model(model: &TrainedClassifier, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_model(model, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrainedClassifier> {
    read_model(std::fs::File::open(path)?)
}
