//! Run manifests: config hash, code version, timestamps, and a checksummed
//! listing of every artifact the run produced.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Serialize)]
pub struct ArtifactEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_hash: String,
    pub code_version: String,
    pub created_unix: u64,
    pub artifacts: Vec<ArtifactEntry>,
}

pub struct ArtifactWriter {
    dir: PathBuf,
    entries: Vec<ArtifactEntry>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents)?;
        let mut h = Sha256::new();
        h.update(contents);
        self.entries.push(ArtifactEntry {
            name: name.to_string(),
            bytes: contents.len(),
            sha256: h.finalize().iter().map(|b| format!("{b:02x}")).collect(),
        });
        Ok(())
    }

    pub fn finish(self, subcommand: &str, config_hash: &str) -> anyhow::Result<PathBuf> {
        let manifest = RunManifest {
            subcommand: subcommand.to_string(),
            config_hash: config_hash.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            artifacts: self.entries,
        };
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?)?;
        Ok(path)
    }
}
