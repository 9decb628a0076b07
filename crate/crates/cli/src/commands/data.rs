use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use dialsum_core::annotate::FallbackAnnotator;
use dialsum_core::corpus::{compute_stats, write_canonical, ReferenceMode};
use dialsum_core::prefix::{assign_pairs, prefix_stats, PrefixPolicy};
use dialsum_core::pseudo_data::{self, write_pairs, Variant};
use dialsum_core::tokenizer::WordTokenizer;

use super::{annotator, backend_name, load_samples, pick, require_file, source_format, usage, write_output};
use crate::manifest::Invocation;
use crate::Ctx;

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// `samsum`, `dialsumm` or `canonical`.
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn convert(ctx: &Ctx, a: ConvertArgs) -> anyhow::Result<()> {
    require_file(&a.input)?;
    let format = source_format(ctx, a.format.as_deref())?;
    let samples = load_samples(&a.input, format)?;
    let mut buf = Vec::new();
    write_canonical(&samples, &mut buf)?;
    write_output(&a.out, &buf, &[&a.input])?;

    let mut inv = Invocation::new("convert", json!({ "format": format!("{format:?}") }));
    inv.input(&a.input)?;
    inv.write(
        &inv.dir(&ctx.run_dir),
        std::slice::from_ref(&a.out),
        json!({ "samples": samples.len() }),
    )?;
    println!("wrote {} samples to {}", samples.len(), a.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// One or more corpus splits.
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub format: Option<String>,
    /// Average output length over every reference instead of the first.
    #[arg(long)]
    pub all_refs: bool,
}

pub fn stats(ctx: &Ctx, a: StatsArgs) -> anyhow::Result<()> {
    let format = source_format(ctx, a.format.as_deref())?;
    let mode = if a.all_refs {
        ReferenceMode::All
    } else {
        ReferenceMode::First
    };
    let mut inv = Invocation::new(
        "stats",
        json!({ "format": format!("{format:?}"), "all_refs": a.all_refs }),
    );
    let mut rows = Vec::new();
    println!("{:<32} {:>8} {:>8} {:>8} {:>8}", "split", "n", "IW", "OW", "CR");
    for path in &a.inputs {
        require_file(path)?;
        inv.input(path)?;
        let s = compute_stats(&load_samples(path, format)?, mode)?;
        println!(
            "{:<32} {:>8} {:>8.2} {:>8.2} {:>8.3}",
            path.file_name()
                .map_or_else(|| path.display().to_string(), |f| f.to_string_lossy().into_owned()),
            s.n_samples,
            s.iw,
            s.ow,
            s.cr
        );
        rows.push(json!({ "path": path, "stats": s }));
    }
    inv.write(&inv.dir(&ctx.run_dir), &[], json!(rows))?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct BuildDataArgs {
    /// Corpus split; defaults to the config path of `--split`.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<String>,
    /// dsum, dialsent, dialindirect, extsum, extsumm, extsent or extsentm.
    #[arg(long)]
    pub variant: Option<String>,
    /// train, validation or test.
    #[arg(long, default_value = "train")]
    pub split: String,
    /// Defaults to `<run-dir>/data/<variant>.<split>.jsonl`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// wo, const, random, ling, ling-noun, ling-verb or ling-root.
    #[arg(long)]
    pub prefix_policy: Option<String>,
    /// samsum or dialsumm (prefix-length profile).
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn build_data(ctx: &Ctx, a: BuildDataArgs) -> anyhow::Result<()> {
    let cfg = &ctx.config;
    let from_config = match a.split.as_str() {
        "train" => cfg.data.train.as_ref(),
        "validation" | "val" => cfg.data.validation.as_ref(),
        "test" => cfg.data.test.as_ref(),
        other => return Err(usage(format!("unknown split `{other}`"))),
    };
    let input = pick(a.input, from_config, "in")?;
    let format = source_format(ctx, a.format.as_deref())?;
    let variant: Variant = a
        .variant
        .as_deref()
        .or(cfg.pseudo_data.variant.as_deref())
        .ok_or_else(|| usage("missing required --variant"))?
        .parse()
        .map_err(usage)?;
    let policy_flag = a.prefix_policy.or_else(|| cfg.prefix.policy.clone());
    let profile = cfg.profile(a.dataset.as_deref())?;
    let policy = policy_flag
        .as_deref()
        .map(|f| PrefixPolicy::from_flag(f, &profile))
        .transpose()
        .map_err(|e| usage(e.to_string()))?;
    let seed = a.seed.or(cfg.prefix.seed).unwrap_or(0);
    let out = a
        .out
        .unwrap_or_else(|| ctx.run_dir.join("data").join(format!("{variant}.{}.jsonl", a.split)));

    let samples = load_samples(&input, format)?;
    let needs_annotation = variant.is_sentence_level() || matches!(policy, Some(PrefixPolicy::Ling(_)));
    let annotator = if needs_annotation { Some(annotator(ctx)?) } else { None };
    let fallback = FallbackAnnotator;
    let ann = annotator.as_deref().unwrap_or(&fallback);
    let mut pairs = pseudo_data::build(variant, &samples, ann)?;
    let mut fallbacks = 0;
    if let Some(p) = policy {
        fallbacks = assign_pairs(&mut pairs, ann, &WordTokenizer::default(), p, &profile, seed)?;
    }
    let mut buf = Vec::new();
    write_pairs(&pairs, &mut buf)?;
    write_output(&out, &buf, &[&input])?;

    let stats = prefix_stats(&pairs).filter(|_| policy.is_some());
    let mut inv = Invocation::new(
        "build-data",
        json!({
            "format": format!("{format:?}"),
            "variant": variant,
            "split": a.split,
            "prefix_policy": policy_flag,
            "profile": profile,
            "seed": seed,
            "annotator": if needs_annotation { Some(backend_name(ctx)) } else { None },
        }),
    );
    inv.input(&input)?;
    inv.write(
        &inv.dir(&ctx.run_dir),
        std::slice::from_ref(&out),
        json!({ "samples": samples.len(), "pairs": pairs.len(), "prefix_stats": stats, "prefix_fallbacks": fallbacks }),
    )?;
    println!(
        "{} samples -> {} {variant} pairs -> {}",
        samples.len(),
        pairs.len(),
        out.display()
    );
    if let Some(s) = stats {
        println!(
            "prefix tokens: mean {:.2} std {:.2} ({} fallbacks)",
            s.mean, s.std, fallbacks
        );
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub format: Option<String>,
    /// Close each selection to a contiguous turn range.
    #[arg(long)]
    pub modified: bool,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn oracle_extract(ctx: &Ctx, a: OracleArgs) -> anyhow::Result<()> {
    require_file(&a.input)?;
    let format = source_format(ctx, a.format.as_deref())?;
    let samples = load_samples(&a.input, format)?;
    let mut buf = Vec::new();
    let mut turns = 0usize;
    for s in &samples {
        let r = pseudo_data::oracle_extract(&s.dialogue, s.summary(), a.modified);
        turns += r.indices.len();
        serde_json::to_writer(
            &mut buf,
            &json!({ "id": s.id(), "indices": r.indices, "score": r.score, "trajectory": r.trajectory }),
        )?;
        buf.push(b'\n');
    }
    write_output(&a.out, &buf, &[&a.input])?;
    let mean_turns = turns as f64 / samples.len() as f64;
    let mut inv = Invocation::new(
        "oracle-extract",
        json!({ "format": format!("{format:?}"), "modified": a.modified }),
    );
    inv.input(&a.input)?;
    inv.write(
        &inv.dir(&ctx.run_dir),
        std::slice::from_ref(&a.out),
        json!({ "samples": samples.len(), "mean_turns": mean_turns }),
    )?;
    println!(
        "{} samples, {:.2} turns selected on average -> {}",
        samples.len(),
        mean_turns,
        a.out.display()
    );
    Ok(())
}
