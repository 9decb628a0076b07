#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dialsum_core::corpus::{write_canonical, Sample};

pub fn dialsum(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dialsum"))
        .current_dir(cwd)
        .env_remove("DIALSUM_ANNOTATOR_CMD")
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn write_samples(path: &Path, samples: &[Sample]) -> PathBuf {
    let mut buf = Vec::new();
    write_canonical(samples, &mut buf).unwrap();
    fs::write(path, buf).unwrap();
    path.to_path_buf()
}

/// All `manifest.json` files under `dir`, sorted.
pub fn manifests(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let Ok(entries) = fs::read_dir(&d) else { continue };
        for e in entries.flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n == "manifest.json")
                && !p.components().any(|c| c.as_os_str() == "checkpoints")
            {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}
