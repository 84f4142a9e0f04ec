//! Run manifests: what ran, on which inputs, with which parameters.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::io::{to_json_string, write_atomic};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub inputs: Vec<FileHash>,
    /// Effective parameters; `config_sha256` is the SHA-256 of their compact
    /// JSON encoding with sorted keys.
    pub config: serde_json::Value,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub outputs: Vec<FileHash>,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn config_hash(config: &serde_json::Value) -> String {
    sha256_hex(config.to_string().as_bytes())
}

impl RunManifest {
    pub fn start(command: &str) -> Self {
        Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            inputs: Vec::new(),
            config: serde_json::Value::Null,
            config_sha256: String::new(),
            seed: None,
            outputs: Vec::new(),
            started_unix_s: unix_now(),
            finished_unix_s: 0,
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)?;
        self.inputs.push(FileHash {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn set_config(&mut self, config: serde_json::Value) {
        self.config_sha256 = config_hash(&config);
        self.config = config;
    }

    /// Writes `bytes` to `out` (or stdout), then the manifest next to it (or
    /// to stderr).
    pub fn emit(mut self, out: Option<&Path>, bytes: &[u8]) -> Result<()> {
        match out {
            Some(path) => {
                write_atomic(path, bytes)?;
                self.outputs.push(FileHash {
                    path: path.display().to_string(),
                    sha256: sha256_hex(bytes),
                });
                self.finish(Some(&manifest_path(path)))
            }
            None => {
                use std::io::Write;
                std::io::stdout().write_all(bytes)?;
                self.outputs.push(FileHash {
                    path: "-".into(),
                    sha256: sha256_hex(bytes),
                });
                self.finish(None)
            }
        }
    }

    /// Writes several files atomically, then one manifest covering all of them.
    pub fn emit_many(mut self, files: &[(PathBuf, Vec<u8>)], manifest: &Path) -> Result<()> {
        for (path, bytes) in files {
            write_atomic(path, bytes)?;
            self.outputs.push(FileHash {
                path: path.display().to_string(),
                sha256: sha256_hex(bytes),
            });
        }
        self.finish(Some(manifest))
    }

    fn finish(mut self, path: Option<&Path>) -> Result<()> {
        self.finished_unix_s = unix_now();
        let text = to_json_string(&self)?;
        match path {
            Some(p) => write_atomic(p, text.as_bytes()),
            None => {
                eprint!("{text}");
                Ok(())
            }
        }
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}
