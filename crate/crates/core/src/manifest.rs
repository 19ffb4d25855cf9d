use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written next to each stage's outputs: what went in,
/// under which configuration and seed, out of which tool version. No
/// timestamps, so reruns produce identical bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub tool_version: String,
    pub seed: u64,
    pub config_digest: String,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<String>,
}

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

impl StageManifest {
    pub fn new(stage: &str, seed: u64, config_digest: &str) -> Self {
        StageManifest {
            stage: stage.into(),
            tool_version: TOOL_VERSION.into(),
            seed,
            config_digest: config_digest.into(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileRecord {
            path: path.display().to_string(),
            sha256: file_digest(path)?,
        });
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Write `<stage>.manifest.json` into `dir` and return its path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("{}.manifest.json", self.stage));
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

pub fn read_stage_manifest(path: &Path) -> Result<StageManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_matches_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_round_trips_and_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        std::fs::write(&input, "hello").unwrap();

        let mut m = StageManifest::new("features", 7, &sha256_hex(b"cfg"));
        m.record_input(&input).unwrap();
        m.record_output(&dir.path().join("out.csv"));
        let p1 = m.write(dir.path()).unwrap();
        let bytes1 = std::fs::read(&p1).unwrap();
        let p2 = m.write(dir.path()).unwrap();
        let bytes2 = std::fs::read(&p2).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(bytes1, bytes2);

        let back = read_stage_manifest(&p1).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.stage, "features");
        assert_eq!(back.tool_version, TOOL_VERSION);
        assert_eq!(back.inputs.len(), 1);
        assert!(back.inputs[0].path.ends_with("in.txt"));
    }

    #[test]
    fn missing_input_file_is_an_io_error() {
        let mut m = StageManifest::new("train", 0, "x");
        assert!(m.record_input(Path::new("/nonexistent/input")).is_err());
    }
}
