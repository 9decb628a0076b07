pub mod data;
pub mod report;
pub mod train;

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::Context;

use dialsum_core::annotate::{Annotator, Backend, ExternalAnnotator, FallbackAnnotator, ANNOTATOR_CMD_ENV};
use dialsum_core::corpus::{load_split, Sample, SourceFormat};
use dialsum_core::pseudo_data::{read_pairs, PseudoPair};

use crate::{Ctx, UsageError};

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Flag value, else config value, else a usage error naming the flag.
pub fn pick(flag: Option<PathBuf>, config: Option<&PathBuf>, name: &str) -> anyhow::Result<PathBuf> {
    let path = flag
        .or_else(|| config.cloned())
        .ok_or_else(|| usage(format!("missing required input --{name}")))?;
    require_file(&path)?;
    Ok(path)
}

pub fn require_file(path: &Path) -> anyhow::Result<()> {
    if path.is_file() || path.is_dir() {
        Ok(())
    } else {
        Err(usage(format!("input {} does not exist", path.display())))
    }
}

pub fn source_format(ctx: &Ctx, flag: Option<&str>) -> anyhow::Result<SourceFormat> {
    flag.or(ctx.config.data.format.as_deref())
        .unwrap_or("canonical")
        .parse()
        .map_err(usage)
}

pub fn load_samples(path: &Path, format: SourceFormat) -> anyhow::Result<Vec<Sample>> {
    let samples = load_split(path, format).with_context(|| format!("loading {}", path.display()))?;
    if samples.is_empty() {
        anyhow::bail!("{} contains no samples", path.display());
    }
    Ok(samples)
}

pub fn load_pairs(path: &Path) -> anyhow::Result<Vec<PseudoPair>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let pairs = read_pairs(BufReader::new(f)).with_context(|| format!("reading pairs from {}", path.display()))?;
    if pairs.is_empty() {
        anyhow::bail!("{} contains no pairs", path.display());
    }
    Ok(pairs)
}

/// Selected backend. Without an explicit choice the external annotator is
/// used when its command is configured.
pub fn annotator(ctx: &Ctx) -> anyhow::Result<Box<dyn Annotator>> {
    let backend = match ctx.annotator.as_deref() {
        Some(name) => name.parse::<Backend>().map_err(usage)?,
        None if std::env::var_os(ANNOTATOR_CMD_ENV).is_some() => Backend::External,
        None => Backend::Fallback,
    };
    match backend {
        Backend::Fallback => Ok(Box::new(FallbackAnnotator)),
        Backend::External => {
            let a = ExternalAnnotator::from_env(ctx.workers).context("starting external annotator")?;
            Ok(Box::new(a))
        }
    }
}

pub fn backend_name(ctx: &Ctx) -> &str {
    match ctx.annotator.as_deref() {
        Some(n) => n,
        None if std::env::var_os(ANNOTATOR_CMD_ENV).is_some() => "external",
        None => "fallback",
    }
}

/// Writes `bytes` to `out` via a temporary file, refusing to overwrite any
/// of `inputs`.
pub fn write_output(out: &Path, bytes: &[u8], inputs: &[&Path]) -> anyhow::Result<()> {
    if let Ok(o) = out.canonicalize() {
        for i in inputs {
            if i.canonicalize().is_ok_and(|i| i == o) {
                return Err(usage(format!("output {} would overwrite an input", out.display())));
            }
        }
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut tmp = out.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", out.display()))?;
    fs::rename(&tmp, out)?;
    Ok(())
}
