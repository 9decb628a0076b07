use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use serde_json::json;
use toml::Value;

use dialsum_core::corpus::serialize_dialogue;
use dialsum_core::eval::{lead3, longest3};
use dialsum_core::prefix::{assign_pairs, PrefixPolicy};
use dialsum_core::seq2seq::checkpoint::{self, PARAMS_FILE, VOCAB_FILE};
use dialsum_core::seq2seq::{generate_batch, GenerationConfig, TinyConfig, TinySeq2Seq};
use dialsum_core::tokenizer::{Tokenizer, WordTokenizer};
use dialsum_core::trainer::{self, DecodeValidator, RunManifest, RunSpec, TrainConfig};

use super::{
    annotator, backend_name, load_pairs, load_samples, pick, require_file, source_format, usage, write_output,
};
use crate::config::overrides;
use crate::manifest::Invocation;
use crate::Ctx;

const DEFAULT_WIDTH: usize = 32;

/// Model, optimizer and decoding flags shared by both training stages.
#[derive(Debug, Args)]
pub struct TrainFlags {
    /// Initial checkpoint directory; a fresh model is built otherwise.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Vocabulary file for a fresh model; fitted on the training data otherwise.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Run name; the run directory is `<run-dir>/<name>`.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub beam_size: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
}

fn int(v: Option<usize>) -> Option<Value> {
    v.map(|x| Value::Integer(x as i64))
}

impl TrainFlags {
    fn train_config(&self, ctx: &Ctx) -> anyhow::Result<TrainConfig> {
        ctx.config.train_config(overrides([
            ("batch_size", int(self.batch_size)),
            ("max_epochs", int(self.epochs)),
            ("learning_rate", self.lr.map(Value::Float)),
            ("patience", int(self.patience)),
            ("warmup_steps", int(self.warmup)),
        ]))
    }
}

pub fn generation_config(
    ctx: &Ctx,
    beam_size: Option<usize>,
    max_len: Option<usize>,
) -> anyhow::Result<GenerationConfig> {
    ctx.config
        .generation_config(overrides([("beam_size", int(beam_size)), ("max_len", int(max_len))]))
}

/// Loads `--init` or builds a fresh model over a vocabulary fitted on `texts`.
fn initial_model<'a>(
    ctx: &Ctx,
    f: &TrainFlags,
    cfg: &TrainConfig,
    seed: u64,
    texts: impl Iterator<Item = &'a str>,
    inv: &mut Invocation,
) -> anyhow::Result<(TinySeq2Seq, WordTokenizer)> {
    if let Some(dir) = &f.init {
        require_file(dir)?;
        inv.input(&dir.join(PARAMS_FILE))?;
        inv.input(&dir.join(VOCAB_FILE))?;
        let (mut model, vocab, _) = checkpoint::load(dir).with_context(|| format!("loading {}", dir.display()))?;
        model.set_dropout(cfg.dropout);
        return Ok((model, vocab));
    }
    let vocab = match &f.vocab {
        Some(p) => {
            require_file(p)?;
            inv.input(p)?;
            WordTokenizer::load(p).with_context(|| format!("reading vocabulary {}", p.display()))?
        }
        None => WordTokenizer::fit(
            texts,
            ctx.config.model.min_freq.unwrap_or(1),
            ctx.config.model.max_vocab,
        ),
    };
    let width = f.width.or(ctx.config.model.width).unwrap_or(DEFAULT_WIDTH);
    if width == 0 {
        return Err(usage("--width must be at least 1"));
    }
    let model_cfg = TinyConfig {
        dropout: cfg.dropout,
        max_source_tokens: cfg.max_source_tokens,
        ..TinyConfig::new(vocab.vocab_size(), width)
    };
    Ok((TinySeq2Seq::new(model_cfg, seed), vocab))
}

fn run_dir(ctx: &Ctx, name: Option<&str>, inv: &Invocation) -> (String, PathBuf) {
    let name = name.map_or_else(|| format!("{}-{}", inv.command, inv.id()), str::to_string);
    let dir = ctx.run_dir.join(&name);
    (name, dir)
}

fn report(m: &RunManifest) {
    println!("{:>6} {:>12} {:>10}", "epoch", "train loss", "val R2");
    for e in &m.epochs {
        let mark = if Some(e.epoch) == m.chosen_epoch { " *" } else { "" };
        println!("{:>6} {:>12.4} {:>10.4}{mark}", e.epoch, e.train_loss, e.val_rouge2);
    }
    if let Some(c) = &m.checkpoint {
        println!("checkpoint: {}", c.display());
    }
}

#[derive(Debug, Args)]
pub struct PostTrainArgs {
    /// Training pairs (JSONL).
    #[arg(long)]
    pub data: PathBuf,
    /// Validation pairs (JSONL).
    #[arg(long)]
    pub val: PathBuf,
    /// Re-assign prefix lengths with this policy before training.
    #[arg(long)]
    pub policy: Option<String>,
    /// samsum or dialsumm (prefix-length profile).
    #[arg(long)]
    pub dataset: Option<String>,
    #[command(flatten)]
    pub flags: TrainFlags,
}

pub fn post_train(ctx: &Ctx, a: PostTrainArgs) -> anyhow::Result<()> {
    require_file(&a.data)?;
    require_file(&a.val)?;
    let cfg = a.flags.train_config(ctx)?;
    let gen = generation_config(ctx, a.flags.beam_size, a.flags.max_len)?;
    let profile = ctx.config.profile(a.dataset.as_deref())?;
    let policy_flag = a.policy.clone().or_else(|| ctx.config.prefix.policy.clone());
    let policy = policy_flag
        .as_deref()
        .map(|p| PrefixPolicy::from_flag(p, &profile))
        .transpose()
        .map_err(|e| usage(e.to_string()))?;
    let seed = a.flags.seed.unwrap_or(cfg.seeds[0]);
    let prefix_seed = ctx.config.prefix.seed.unwrap_or(seed);

    let mut pairs = load_pairs(&a.data)?;
    let val = load_pairs(&a.val)?;
    let variant = pairs[0].variant.to_string();
    let mut inv = Invocation::new(
        "post-train",
        json!({
            "train": cfg,
            "generation": gen,
            "policy": policy_flag,
            "profile": profile,
            "prefix_seed": prefix_seed,
            "seed": seed,
            "width": a.flags.width.or(ctx.config.model.width),
            "annotator": policy.map(|_| backend_name(ctx)),
        }),
    );
    inv.input(&a.data)?;
    inv.input(&a.val)?;
    if let Some(p) = policy {
        let ann = annotator(ctx)?;
        let n = assign_pairs(
            &mut pairs,
            ann.as_ref(),
            &WordTokenizer::default(),
            p,
            &profile,
            prefix_seed,
        )?;
        log::info!("assigned prefixes with {} constant-length fallbacks", n);
    }
    let texts = pairs.iter().flat_map(|p| [p.source.as_str(), p.target.as_str()]);
    let (model, vocab) = initial_model(ctx, &a.flags, &cfg, seed, texts, &mut inv)?;
    let validator = DecodeValidator::for_pairs(&val, &vocab, gen, cfg.val_prefix_tokens)?;
    let (name, dir) = run_dir(ctx, a.flags.name.as_deref(), &inv);
    let run = RunSpec {
        name,
        dir: Some(dir),
        variant: Some(variant),
        prefix_policy: policy_flag.or(Some("stored".into())),
        vocab: Some(&vocab),
        provenance: Some(inv.to_json()),
    };
    let out = trainer::post_train(model, &pairs, &validator, &vocab, &cfg, seed, &run)?;
    report(&out.manifest);
    Ok(())
}

#[derive(Debug, Args)]
pub struct FineTuneArgs {
    /// Training split; defaults to the config train path.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Validation split; defaults to the config validation path.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<String>,
    #[command(flatten)]
    pub flags: TrainFlags,
}

pub fn fine_tune(ctx: &Ctx, a: FineTuneArgs) -> anyhow::Result<()> {
    let train_path = pick(a.train, ctx.config.data.train.as_ref(), "train")?;
    let val_path = pick(a.val, ctx.config.data.validation.as_ref(), "val")?;
    let format = source_format(ctx, a.format.as_deref())?;
    let cfg = a.flags.train_config(ctx)?;
    let gen = generation_config(ctx, a.flags.beam_size, a.flags.max_len)?;
    let seed = a.flags.seed.unwrap_or(cfg.seeds[0]);

    let samples = load_samples(&train_path, format)?;
    let val = load_samples(&val_path, format)?;
    let mut inv = Invocation::new(
        "fine-tune",
        json!({
            "train": cfg,
            "generation": gen,
            "format": format!("{format:?}"),
            "seed": seed,
            "width": a.flags.width.or(ctx.config.model.width),
        }),
    );
    inv.input(&train_path)?;
    inv.input(&val_path)?;
    let sources: Vec<String> = samples.iter().map(|s| serialize_dialogue(&s.dialogue)).collect();
    let texts = sources
        .iter()
        .map(String::as_str)
        .chain(samples.iter().map(|s| s.summary()));
    let (model, vocab) = initial_model(ctx, &a.flags, &cfg, seed, texts, &mut inv)?;
    let validator = DecodeValidator::for_samples(&val, &vocab, gen)?;
    let (name, dir) = run_dir(ctx, a.flags.name.as_deref(), &inv);
    let run = RunSpec {
        name,
        dir: Some(dir),
        variant: Some("dsum".into()),
        prefix_policy: None,
        vocab: Some(&vocab),
        provenance: Some(inv.to_json()),
    };
    let out = trainer::fine_tune(model, &samples, &validator, &vocab, &cfg, seed, &run)?;
    report(&out.manifest);
    Ok(())
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Checkpoint directory.
    #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
    pub checkpoint: Option<PathBuf>,
    /// lead3 or longest3.
    #[arg(long)]
    pub baseline: Option<String>,
    /// Samples to summarize; defaults to the config test path.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<String>,
    /// One summary per line.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub beam_size: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn generate(ctx: &Ctx, a: GenerateArgs) -> anyhow::Result<()> {
    let input = pick(a.input, ctx.config.data.test.as_ref(), "in")?;
    let format = source_format(ctx, a.format.as_deref())?;
    let samples = load_samples(&input, format)?;
    let mut inputs: Vec<&Path> = vec![&input];
    let (lines, params) = match (&a.checkpoint, a.baseline.as_deref()) {
        (Some(dir), _) => {
            require_file(dir)?;
            inputs.push(dir);
            let gen = generation_config(ctx, a.beam_size, a.max_len)?;
            let (model, vocab, _) = checkpoint::load(dir).with_context(|| format!("loading {}", dir.display()))?;
            let sources: Vec<Vec<u32>> = samples
                .iter()
                .map(|s| vocab.encode(&serialize_dialogue(&s.dialogue)))
                .collect();
            let outs = generate_batch(&model, &sources, None, &gen)?;
            let truncated = outs.iter().filter(|g| g.truncated).count();
            if truncated > 0 {
                log::warn!("{truncated} outputs ended without an end token");
            }
            let lines = outs
                .iter()
                .map(|g| one_line(&vocab.decode(&g.tokens)))
                .collect::<Vec<_>>();
            (lines, json!({ "generation": gen }))
        }
        (None, Some(b)) => {
            let f: fn(&dialsum_core::corpus::Dialogue) -> String = match b {
                "lead3" => lead3,
                "longest3" => longest3,
                other => return Err(usage(format!("unknown baseline `{other}`"))),
            };
            let lines = samples.iter().map(|s| one_line(&f(&s.dialogue))).collect();
            (lines, json!({ "baseline": b }))
        }
        (None, None) => return Err(usage("one of --checkpoint or --baseline is required")),
    };
    let mut body = lines.join("\n");
    body.push('\n');
    write_output(&a.out, body.as_bytes(), &inputs)?;

    let mut inv = Invocation::new(
        "generate",
        json!({ "format": format!("{format:?}"), "settings": params }),
    );
    inv.input(&input)?;
    if let Some(dir) = &a.checkpoint {
        inv.input(&dir.join(PARAMS_FILE))?;
        inv.input(&dir.join(VOCAB_FILE))?;
    }
    inv.write(
        &inv.dir(&ctx.run_dir),
        std::slice::from_ref(&a.out),
        json!({ "samples": lines.len() }),
    )?;
    println!("wrote {} summaries to {}", lines.len(), a.out.display());
    Ok(())
}
