//! Run manifests: what a command was asked to do and what it wrote.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Resolved invocation, sufficient to replay the run.
    pub invocation: serde_json::Value,
    pub seeds: Vec<u64>,
    pub build: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub outputs: Vec<PathBuf>,
}

pub fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

pub fn build_id() -> String {
    match option_env!("CAGPOOL_BUILD_ID") {
        Some(id) => format!("{} ({id})", env!("CARGO_PKG_VERSION")),
        None => env!("CARGO_PKG_VERSION").to_string(),
    }
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Where the manifest of a command writing to `out` goes: inside `out`
/// for directory outputs, next to it otherwise.
pub fn manifest_path(out: &Path, out_is_dir: bool) -> PathBuf {
    if out_is_dir {
        out.join("manifest.json")
    } else {
        let mut name = out.file_stem().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        out.with_file_name(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_paths() {
        let dir = tempfile::tempdir().unwrap();
        let m = RunManifest {
            command: "gen-ged".into(),
            invocation: serde_json::json!({"graphs": 4}),
            seeds: vec![1],
            build: build_id(),
            started_unix_ms: 1,
            finished_unix_ms: 2,
            outputs: vec![dir.path().join("train.jsonl")],
        };
        let p = manifest_path(dir.path(), true);
        m.save(&p).unwrap();
        assert_eq!(RunManifest::load(&p).unwrap(), m);
        assert_eq!(
            manifest_path(Path::new("out/report.json"), false),
            PathBuf::from("out/report.manifest.json")
        );
    }
}
