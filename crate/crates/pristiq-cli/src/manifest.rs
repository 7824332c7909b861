//! Run manifests: a JSON sidecar next to every output recording the
//! command, resolved configuration, seeds, and artifact digests — enough to
//! reproduce the run byte-identically.

use pristiq::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Serialize)]
struct FileDigest {
    path: PathBuf,
    sha256: String,
}

#[derive(Serialize)]
pub struct RunManifest {
    command: String,
    argv: Vec<String>,
    version: String,
    seeds: BTreeMap<String, u64>,
    config: serde_json::Value,
    inputs: Vec<FileDigest>,
    artifacts: Vec<FileDigest>,
    duration_ms: u128,
}

pub struct ManifestBuilder {
    manifest: RunManifest,
    started: Instant,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(format!("{:x}", h.finalize()))
}

/// Write via a temp file in the same directory, then rename into place.
pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = match dir {
        Some(d) => d.join(format!(
            ".{}.tmp",
            path.file_name().unwrap_or_default().to_string_lossy()
        )),
        None => PathBuf::from(format!(
            ".{}.tmp",
            path.file_name().unwrap_or_default().to_string_lossy()
        )),
    };
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Key material must stay private; flag files any other user can read.
pub fn warn_if_world_readable(path: &Path) {
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        if let Ok(meta) = std::fs::metadata(path) {
            if meta.permissions().mode() & 0o004 != 0 {
                eprintln!(
                    "warning: key file {} is world-readable; consider `chmod 600`",
                    path.display()
                );
            }
        }
    }
    #[cfg(not(unix))]
    let _ = path;
}

impl ManifestBuilder {
    pub fn new(command: &str, started: Instant) -> ManifestBuilder {
        ManifestBuilder {
            manifest: RunManifest {
                command: command.to_string(),
                argv: std::env::args().collect(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                seeds: BTreeMap::new(),
                config: serde_json::Value::Null,
                inputs: Vec::new(),
                artifacts: Vec::new(),
                duration_ms: 0,
            },
            started,
        }
    }

    pub fn seed(mut self, name: &str, value: u64) -> ManifestBuilder {
        self.manifest.seeds.insert(name.to_string(), value);
        self
    }

    pub fn seeds(mut self, it: impl IntoIterator<Item = (String, u64)>) -> ManifestBuilder {
        self.manifest.seeds.extend(it);
        self
    }

    pub fn config(mut self, value: serde_json::Value) -> ManifestBuilder {
        self.manifest.config = value;
        self
    }

    pub fn input(mut self, path: &Path) -> Result<ManifestBuilder> {
        self.manifest.inputs.push(FileDigest {
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        });
        Ok(self)
    }

    pub fn artifact(mut self, path: &Path) -> Result<ManifestBuilder> {
        self.manifest.artifacts.push(FileDigest {
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        });
        Ok(self)
    }

    /// Write `<primary_output>.manifest.json` atomically.
    pub fn write(mut self, primary_output: &Path) -> Result<()> {
        self.manifest.duration_ms = self.started.elapsed().as_millis();
        let mut name = primary_output.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        let path = primary_output.with_file_name(name);
        let body = serde_json::to_string_pretty(&self.manifest)? + "\n";
        atomic_write(&path, body.as_bytes())
    }
}
