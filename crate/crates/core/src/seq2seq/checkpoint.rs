//! Checkpoint directories: `params.bin`, `manifest.json` and `vocab.txt`.
//!
//! A checkpoint is written into a sibling temporary directory and renamed
//! into place, so readers never see a half-written checkpoint.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelError, Result, Seq2Seq, TinyConfig, TinySeq2Seq};
use crate::tokenizer::{Tokenizer, WordTokenizer};

pub const PARAMS_FILE: &str = "params.bin";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const VOCAB_FILE: &str = "vocab.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub model_kind: String,
    pub vocab_size: usize,
    pub config_hash: String,
    /// Training stage that produced the parameters, e.g. `post-train`.
    pub stage: String,
    pub config: serde_json::Value,
    pub num_params: usize,
}

/// Hex SHA-256 of the compact JSON rendering of `value`.
pub fn config_hash(value: &serde_json::Value) -> String {
    format!("{:x}", Sha256::digest(value.to_string().as_bytes()))
}

fn write_file(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    f.sync_all()
}

/// Saves `model` and `vocab` to `dir`, replacing any previous checkpoint.
pub fn save<M: Seq2Seq>(dir: &Path, model: &M, vocab: &WordTokenizer, stage: &str) -> Result<CheckpointManifest> {
    if model.vocab_size() != vocab.vocab_size() {
        return Err(ModelError::Checkpoint(format!(
            "model vocabulary {} differs from tokenizer vocabulary {}",
            model.vocab_size(),
            vocab.vocab_size()
        )));
    }
    let config = model.config_json();
    let manifest = CheckpointManifest {
        model_kind: model.kind().to_string(),
        vocab_size: model.vocab_size(),
        config_hash: config_hash(&config),
        stage: stage.to_string(),
        config,
        num_params: model.params().len(),
    };
    let name = dir
        .file_name()
        .ok_or_else(|| ModelError::Checkpoint(format!("bad checkpoint path {}", dir.display())))?
        .to_string_lossy()
        .into_owned();
    let parent = dir
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&parent)?;
    let tmp = parent.join(format!(".{name}.tmp-{}", std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir(&tmp)?;
    let bytes: Vec<u8> = model.params().iter().flat_map(|x| x.to_le_bytes()).collect();
    write_file(&tmp.join(PARAMS_FILE), &bytes)?;
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_file(&tmp.join(MANIFEST_FILE), &json)?;
    let mut vocab_bytes = Vec::new();
    vocab.write_vocab(&mut vocab_bytes)?;
    write_file(&tmp.join(VOCAB_FILE), &vocab_bytes)?;
    if dir.exists() {
        let old = parent.join(format!(".{name}.old-{}", std::process::id()));
        fs::rename(dir, &old)?;
        fs::rename(&tmp, dir)?;
        fs::remove_dir_all(&old)?;
    } else {
        fs::rename(&tmp, dir)?;
    }
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<CheckpointManifest> {
    let raw = fs::read(dir.join(MANIFEST_FILE))?;
    serde_json::from_slice(&raw).map_err(|e| ModelError::Checkpoint(format!("bad manifest: {e}")))
}

/// Loads a checkpoint saved from a [`TinySeq2Seq`].
pub fn load(dir: &Path) -> Result<(TinySeq2Seq, WordTokenizer, CheckpointManifest)> {
    let manifest = read_manifest(dir)?;
    if config_hash(&manifest.config) != manifest.config_hash {
        return Err(ModelError::Checkpoint(
            "config hash does not match the stored config".into(),
        ));
    }
    let config: TinyConfig = serde_json::from_value(manifest.config.clone())
        .map_err(|e| ModelError::Checkpoint(format!("unsupported model config: {e}")))?;
    let vocab = WordTokenizer::load(dir.join(VOCAB_FILE))?;
    if vocab.vocab_size() != manifest.vocab_size || config.vocab_size != manifest.vocab_size {
        return Err(ModelError::Checkpoint("vocabulary size mismatch".into()));
    }
    let mut bytes = Vec::new();
    fs::File::open(dir.join(PARAMS_FILE))?.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(ModelError::Checkpoint(
            "parameter blob is not a whole number of f64 values".into(),
        ));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut model = TinySeq2Seq::new(config, 0);
    model.set_params(&values)?;
    Ok((model, vocab, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let vocab = WordTokenizer::fit(["a b c d"], 1, None);
        let model = TinySeq2Seq::new(TinyConfig::new(vocab.vocab_size(), 5), 9);
        let path = dir.path().join("ckpt");
        let m = save(&path, &model, &vocab, "post-train").unwrap();
        let (back, v2, m2) = load(&path).unwrap();
        assert_eq!(back.params(), model.params());
        assert_eq!(v2, vocab);
        assert_eq!(m, m2);
        assert_eq!(m.model_kind, "tiny-seq2seq");

        let other = TinySeq2Seq::new(TinyConfig::new(vocab.vocab_size(), 5), 10);
        save(&path, &other, &vocab, "fine-tune").unwrap();
        let (back, _, m3) = load(&path).unwrap();
        assert_eq!(back.params(), other.params());
        assert_eq!(m3.stage, "fine-tune");
        let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }

    #[test]
    fn tampered_checkpoints_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let vocab = WordTokenizer::fit(["a b"], 1, None);
        let model = TinySeq2Seq::new(TinyConfig::new(vocab.vocab_size(), 3), 1);
        let path = dir.path().join("c");
        save(&path, &model, &vocab, "x").unwrap();
        fs::write(path.join(PARAMS_FILE), [0u8; 12]).unwrap();
        assert!(load(&path).is_err());
        let wrong = TinySeq2Seq::new(TinyConfig::new(vocab.vocab_size() + 1, 3), 1);
        assert!(save(&path, &wrong, &vocab, "x").is_err());
    }
}
