//! Two-stage training: prefix-guided post-training on pseudo-paraphrases,
//! then ordinary fine-tuning on dialogue-summary pairs. Both stages stop
//! early on validation ROUGE-2 F1.

pub mod optim;
mod validate;

pub use optim::AdamW;
pub use validate::{DecodeValidator, Validation, Validator};

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{serialize_dialogue, Sample};
use crate::pseudo_data::PseudoPair;
use crate::seq2seq::{checkpoint, Example, ModelError, Seq2Seq};
use crate::tokenizer::{Tokenizer, WordTokenizer};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty training set")]
    EmptyDataset,
    #[error("empty validation set")]
    EmptyValidation,
    #[error("pair {index} has no prefix assignment")]
    MissingPrefix { index: usize },
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFinite { epoch: usize, step: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;

fn default_lr() -> f64 {
    3e-5
}
fn default_wd() -> f64 {
    0.01
}
fn default_warmup() -> usize {
    500
}
fn default_dropout() -> f64 {
    0.1
}
fn default_patience() -> usize {
    3
}
fn default_epochs() -> usize {
    10
}
fn default_max_source() -> usize {
    1024
}
fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}
fn default_val_prefix() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_wd")]
    pub weight_decay: f64,
    #[serde(default = "default_warmup")]
    pub warmup_steps: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_max_source")]
    pub max_source_tokens: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub batch_size: usize,
    /// Gold target tokens forced at post-training validation decodes.
    #[serde(default = "default_val_prefix")]
    pub val_prefix_tokens: usize,
}

impl TrainConfig {
    pub fn new(batch_size: usize) -> Self {
        Self {
            learning_rate: default_lr(),
            weight_decay: default_wd(),
            warmup_steps: default_warmup(),
            dropout: default_dropout(),
            patience: default_patience(),
            max_epochs: default_epochs(),
            max_source_tokens: default_max_source(),
            seeds: default_seeds(),
            batch_size,
            val_prefix_tokens: default_val_prefix(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad("learning_rate must be positive");
        }
        if self.weight_decay < 0.0 {
            return bad("weight_decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.patience == 0 || self.patience > self.max_epochs.max(1) {
            return bad("patience must be between 1 and max_epochs");
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    PostTrain,
    FineTune,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::PostTrain => "post-train",
            Stage::FineTune => "fine-tune",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_rouge2: f64,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub stage: Stage,
    pub variant: Option<String>,
    pub prefix_policy: Option<String>,
    pub seed: u64,
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept; `None` if no epoch ran.
    pub chosen_epoch: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    pub status: RunStatus,
    pub failure: Option<String>,
    pub steps: usize,
    /// Caller-supplied description of how the run was launched.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

impl RunManifest {
    /// True when the chosen epoch has the highest validation ROUGE-2 and no
    /// later epoch beats it.
    pub fn early_stop_consistent(&self) -> bool {
        match self.chosen_epoch {
            None => self.epochs.is_empty(),
            Some(c) => {
                let chosen = self.epochs.iter().find(|e| e.epoch == c).map(|e| e.val_rouge2);
                chosen.is_some_and(|best| self.epochs.iter().all(|e| e.val_rouge2 <= best))
            }
        }
    }

    pub fn best_val_rouge2(&self) -> Option<f64> {
        let c = self.chosen_epoch?;
        self.epochs.iter().find(|e| e.epoch == c).map(|e| e.val_rouge2)
    }
}

/// Where and under what name a run records its artifacts.
#[derive(Debug, Clone, Default)]
pub struct RunSpec<'a> {
    pub name: String,
    /// `runs/<name>`; nothing is written when absent.
    pub dir: Option<PathBuf>,
    pub variant: Option<String>,
    pub prefix_policy: Option<String>,
    /// Needed to write checkpoints.
    pub vocab: Option<&'a WordTokenizer>,
    pub provenance: Option<serde_json::Value>,
}

pub struct TrainOutcome<M> {
    pub model: M,
    pub manifest: RunManifest,
    /// Mean batch loss of every optimizer step.
    pub loss_trace: Vec<f64>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

fn write_manifest(dir: Option<&Path>, manifest: &RunManifest) -> std::io::Result<()> {
    match dir {
        Some(d) => write_atomic(
            &d.join("manifest.json"),
            &serde_json::to_vec_pretty(manifest).expect("serializes"),
        ),
        None => Ok(()),
    }
}

/// Batches of similar total length; batch order is shuffled per epoch.
pub fn make_batches(examples: &[Example], batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.sort_by_key(|&i| (examples[i].source.len() + examples[i].target.len(), i));
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0xA24B_AED4_963E_E407));
    batches.shuffle(&mut rng);
    batches
}

fn batch_step<M: Seq2Seq>(
    model: &M,
    examples: &[Example],
    batch: &[usize],
    dropout_seed: u64,
) -> Result<(f64, Vec<f64>)> {
    let parts: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .enumerate()
        .map(|(k, &i)| {
            let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed.wrapping_add(k as u64));
            model.loss_and_grad(&examples[i], Some(&mut rng))
        })
        .collect::<std::result::Result<_, _>>()?;
    let n = parts.len() as f64;
    let mut grad = vec![0.0; model.params().len()];
    let mut loss = 0.0;
    for (l, g) in parts {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}

/// Shared loop of both stages.
pub fn train<M: Seq2Seq>(
    mut model: M,
    examples: &[Example],
    validator: &dyn Validator<M>,
    config: &TrainConfig,
    seed: u64,
    stage: Stage,
    run: &RunSpec,
) -> Result<TrainOutcome<M>> {
    config.validate()?;
    if examples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let dir = run.dir.as_deref();
    if let Some(d) = dir {
        fs::create_dir_all(d.join("checkpoints"))?;
        fs::create_dir_all(d.join("val_decodes"))?;
    }
    let ckpt_path = dir.map(|d| d.join("checkpoints").join("best"));
    let mut manifest = RunManifest {
        name: run.name.clone(),
        stage,
        variant: run.variant.clone(),
        prefix_policy: run.prefix_policy.clone(),
        seed,
        config: config.clone(),
        epochs: Vec::new(),
        chosen_epoch: None,
        checkpoint: None,
        status: RunStatus::Running,
        failure: None,
        steps: 0,
        provenance: run.provenance.clone(),
    };
    let save_best = |model: &M, manifest: &mut RunManifest| -> Result<()> {
        if let (Some(path), Some(vocab)) = (&ckpt_path, run.vocab) {
            checkpoint::save(path, model, vocab, stage.name())?;
            manifest.checkpoint = Some(path.clone());
        }
        Ok(())
    };
    let mut loss_trace = Vec::new();
    if config.max_epochs == 0 {
        save_best(&model, &mut manifest)?;
        manifest.status = RunStatus::Completed;
        write_manifest(dir, &manifest)?;
        return Ok(TrainOutcome {
            model,
            manifest,
            loss_trace,
        });
    }
    write_manifest(dir, &manifest)?;

    let mut opt = AdamW::new(
        model.params().len(),
        config.learning_rate,
        config.weight_decay,
        config.warmup_steps,
    );
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut since_best = 0;
    for epoch in 1..=config.max_epochs {
        let batches = make_batches(examples, config.batch_size, seed, epoch);
        let mut epoch_loss = 0.0;
        for (step, batch) in batches.iter().enumerate() {
            let dropout_seed = crate::prefix::pair_seed(seed, opt.steps_taken() * 1_000_003);
            let (loss, grad) = batch_step(&model, examples, batch, dropout_seed)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                manifest.status = RunStatus::Failed;
                manifest.failure = Some(format!("non-finite loss at epoch {epoch}, step {step}"));
                manifest.steps = opt.steps_taken();
                write_manifest(dir, &manifest)?;
                return Err(TrainError::NonFinite { epoch, step });
            }
            opt.update(model.params_mut(), &grad);
            loss_trace.push(loss);
            epoch_loss += loss;
        }
        let outcome = validator.validate(&model)?;
        if let Some(d) = dir {
            let mut text = outcome.decodes.join("\n");
            text.push('\n');
            write_atomic(
                &d.join("val_decodes").join(format!("epoch-{epoch}.txt")),
                text.as_bytes(),
            )?;
        }
        let improved = best.as_ref().is_none_or(|(b, _)| outcome.rouge2 > *b);
        if improved {
            best = Some((outcome.rouge2, model.params().to_vec()));
            manifest.chosen_epoch = Some(epoch);
            since_best = 0;
            save_best(&model, &mut manifest)?;
        } else {
            since_best += 1;
        }
        manifest.epochs.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / batches.len() as f64,
            val_rouge2: outcome.rouge2,
            best_so_far: best.as_ref().map_or(outcome.rouge2, |(b, _)| *b),
        });
        manifest.steps = opt.steps_taken();
        write_manifest(dir, &manifest)?;
        log::info!(
            "{} epoch {epoch}: loss {:.4}, val R2 {:.4}",
            stage.name(),
            epoch_loss / batches.len() as f64,
            outcome.rouge2
        );
        if since_best >= config.patience {
            break;
        }
    }
    if let Some((_, params)) = best {
        model.set_params(&params)?;
    }
    manifest.status = RunStatus::Completed;
    write_manifest(dir, &manifest)?;
    Ok(TrainOutcome {
        model,
        manifest,
        loss_trace,
    })
}

/// Training examples of pseudo-paraphrase pairs with their stored prefixes.
pub fn pair_examples(pairs: &[PseudoPair], tokenizer: &dyn Tokenizer) -> Result<Vec<Example>> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let a = p.prefix_tokens.ok_or(TrainError::MissingPrefix { index: i })?;
            Ok(Example::from_text(tokenizer, &p.source, &p.target, a))
        })
        .collect()
}

/// Training examples of dialogue-summary samples (first reference, no prefix).
pub fn sample_examples(samples: &[Sample], tokenizer: &dyn Tokenizer) -> Vec<Example> {
    samples
        .iter()
        .map(|s| Example::from_text(tokenizer, &serialize_dialogue(&s.dialogue), s.summary(), 0))
        .collect()
}

/// Post-trains on pairs carrying `prefix_tokens`.
pub fn post_train<M: Seq2Seq>(
    model: M,
    pairs: &[PseudoPair],
    validator: &dyn Validator<M>,
    tokenizer: &dyn Tokenizer,
    config: &TrainConfig,
    seed: u64,
    run: &RunSpec,
) -> Result<TrainOutcome<M>> {
    let examples = pair_examples(pairs, tokenizer)?;
    train(model, &examples, validator, config, seed, Stage::PostTrain, run)
}

/// Fine-tunes on full summaries with the ordinary loss.
pub fn fine_tune<M: Seq2Seq>(
    model: M,
    samples: &[Sample],
    validator: &dyn Validator<M>,
    tokenizer: &dyn Tokenizer,
    config: &TrainConfig,
    seed: u64,
    run: &RunSpec,
) -> Result<TrainOutcome<M>> {
    let examples = sample_examples(samples, tokenizer);
    train(model, &examples, validator, config, seed, Stage::FineTune, run)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub variant: String,
    pub policy: String,
    pub best_seed: u64,
    pub best_score: f64,
    /// `(seed, score)` for every seed.
    pub per_seed: Vec<(u64, f64)>,
}

/// Runs every (variant, policy, seed) cell and keeps the best seed of each
/// (variant, policy) pair. `run_cell` returns the test score of one run.
pub fn run_matrix<F, E>(
    variants: &[String],
    policies: &[String],
    seeds: &[u64],
    mut run_cell: F,
) -> std::result::Result<Vec<MatrixRow>, E>
where
    F: FnMut(&str, &str, u64) -> std::result::Result<f64, E>,
{
    let mut rows = Vec::new();
    for v in variants {
        for p in policies {
            let mut per_seed = Vec::with_capacity(seeds.len());
            for &s in seeds {
                per_seed.push((s, run_cell(v, p, s)?));
            }
            let (best_seed, best_score) = per_seed.iter().copied().fold(
                (seeds.first().copied().unwrap_or_default(), f64::NEG_INFINITY),
                |acc, x| {
                    if x.1 > acc.1 {
                        x
                    } else {
                        acc
                    }
                },
            );
            rows.push(MatrixRow {
                variant: v.clone(),
                policy: p.clone(),
                best_seed,
                best_score,
                per_seed,
            });
        }
    }
    Ok(rows)
}
