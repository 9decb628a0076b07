//! Run manifests: what was run, with which settings, on which inputs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputHash {
    pub path: PathBuf,
    /// Git blob object id of the file contents (SHA-256 object format).
    pub blob_sha256: String,
}

/// Git-style blob hash: SHA-256 over `blob <len>\0<contents>`.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    format!("{:x}", h.finalize())
}

#[derive(Debug, Clone, Serialize)]
pub struct Invocation {
    pub command: String,
    pub version: &'static str,
    pub params: serde_json::Value,
    pub config_hash: String,
    pub inputs: Vec<InputHash>,
}

impl Invocation {
    pub fn new(command: &str, params: serde_json::Value) -> Self {
        let config_hash = format!("{:x}", Sha256::digest(params.to_string().as_bytes()));
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            params,
            config_hash,
            inputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(InputHash {
            path: path.to_path_buf(),
            blob_sha256: blob_hash(&bytes),
        });
        Ok(())
    }

    /// First 12 hex digits of the hash over command, config and inputs.
    pub fn id(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.command.as_bytes());
        h.update(self.config_hash.as_bytes());
        for i in &self.inputs {
            h.update(i.blob_sha256.as_bytes());
        }
        format!("{:x}", h.finalize())[..12].to_string()
    }

    pub fn dir(&self, run_dir: &Path) -> PathBuf {
        run_dir.join(format!("{}-{}", self.command, self.id()))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("invocation serializes")
    }

    /// Writes `<dir>/manifest.json` with the invocation, outputs and result.
    pub fn write(&self, dir: &Path, outputs: &[PathBuf], result: serde_json::Value) -> anyhow::Result<PathBuf> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            #[serde(flatten)]
            invocation: &'a Invocation,
            outputs: &'a [PathBuf],
            result: serde_json::Value,
        }
        fs::create_dir_all(dir)?;
        let path = dir.join("manifest.json");
        let tmp = dir.join("manifest.json.tmp");
        let body = serde_json::to_vec_pretty(&Manifest {
            invocation: self,
            outputs,
            result,
        })?;
        fs::write(&tmp, body)?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_hash_matches_git_sha256_objects() {
        // `git hash-object --object-format=sha256` of an empty file.
        assert_eq!(
            blob_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }

    #[test]
    fn id_depends_on_params_and_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("a.txt");
        fs::write(&f, "x").unwrap();
        let mut a = Invocation::new("stats", serde_json::json!({"k": 1}));
        a.input(&f).unwrap();
        let mut b = Invocation::new("stats", serde_json::json!({"k": 1}));
        b.input(&f).unwrap();
        assert_eq!(a.id(), b.id());
        let c = Invocation::new("stats", serde_json::json!({"k": 2}));
        assert_ne!(a.id(), c.id());
        fs::write(&f, "y").unwrap();
        let mut d = Invocation::new("stats", serde_json::json!({"k": 1}));
        d.input(&f).unwrap();
        assert_ne!(a.id(), d.id());
    }
}
