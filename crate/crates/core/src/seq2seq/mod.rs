//! Encoder-decoder contract, prefix-guided loss and decoding.

mod beam;
pub mod checkpoint;
mod tiny;

pub use beam::{beam_search, Generation, GenerationConfig};
pub use tiny::{TinyConfig, TinyEncoded, TinySeq2Seq};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenizer::{Tokenizer, BOS, EOS};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("prefix length {a} leaves no supervised token in a target of {l} tokens")]
    PrefixTooLong { a: usize, l: usize },
    #[error("log-probability table has {rows} rows for {l} target tokens")]
    ShapeMismatch { rows: usize, l: usize },
    #[error("empty target")]
    EmptyTarget,
    #[error("expected {expected} parameters, got {got}")]
    ParamLength { expected: usize, got: usize },
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// One training example in model ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub source: Vec<u32>,
    /// Target ids ending with the end token.
    pub target: Vec<u32>,
    /// Leading target tokens excluded from the loss.
    pub prefix: usize,
}

impl Example {
    /// Tokenizes a pair; the prefix is clamped so at least one content
    /// token stays supervised.
    pub fn from_text(tokenizer: &dyn Tokenizer, source: &str, target: &str, prefix: usize) -> Self {
        let mut ids = tokenizer.encode(target);
        let prefix = prefix.min(ids.len().saturating_sub(1));
        ids.push(EOS);
        Self {
            source: tokenizer.encode(source),
            target: ids,
            prefix,
        }
    }

    /// Decoder inputs: the start token followed by all but the last target id.
    pub fn decoder_inputs(&self) -> Vec<u32> {
        std::iter::once(BOS)
            .chain(self.target[..self.target.len().saturating_sub(1)].iter().copied())
            .collect()
    }
}

/// Behaviour every summarization model provides.
pub trait Seq2Seq: Send + Sync {
    type Encoded: Send + Sync;

    fn kind(&self) -> &'static str;
    fn vocab_size(&self) -> usize;
    /// Architecture description; its hash identifies compatible parameters.
    fn config_json(&self) -> serde_json::Value;

    fn encode(&self, source: &[u32]) -> Self::Encoded;

    /// Row `t` holds log P(next | inputs[..=t]) over the vocabulary.
    fn decoder_logprobs(&self, encoded: &Self::Encoded, inputs: &[u32]) -> Vec<Vec<f64>>;

    /// Log-probabilities of the token following `inputs`.
    fn next_logprobs(&self, encoded: &Self::Encoded, inputs: &[u32]) -> Vec<f64> {
        self.decoder_logprobs(encoded, inputs).pop().unwrap_or_default()
    }

    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    fn set_params(&mut self, values: &[f64]) -> Result<()> {
        let p = self.params_mut();
        if p.len() != values.len() {
            return Err(ModelError::ParamLength {
                expected: p.len(),
                got: values.len(),
            });
        }
        p.copy_from_slice(values);
        Ok(())
    }

    /// Prefix-guided loss of one example and its gradient with respect to
    /// the parameters. `dropout` enables training-mode dropout.
    fn loss_and_grad(&self, example: &Example, dropout: Option<&mut dyn RngCore>) -> Result<(f64, Vec<f64>)>;
}

fn check_shape(table: &[Vec<f64>], target: &[u32], a: usize) -> Result<()> {
    let l = target.len();
    if l == 0 {
        return Err(ModelError::EmptyTarget);
    }
    if table.len() != l {
        return Err(ModelError::ShapeMismatch { rows: table.len(), l });
    }
    if a >= l {
        return Err(ModelError::PrefixTooLong { a, l });
    }
    Ok(())
}

/// Mean negative log-likelihood of target positions after the first `a`.
pub fn pgg_loss(table: &[Vec<f64>], target: &[u32], a: usize) -> Result<f64> {
    check_shape(table, target, a)?;
    let mut sum = 0.0;
    for t in a..target.len() {
        sum += table[t][target[t] as usize];
    }
    Ok(-sum / (target.len() - a) as f64)
}

/// Ordinary generation loss: the prefix-guided loss with no prefix.
pub fn vanilla_loss(table: &[Vec<f64>], target: &[u32]) -> Result<f64> {
    pgg_loss(table, target, 0)
}

/// [`pgg_loss`] together with its gradient with respect to the logits that
/// produced `table`. Rows inside the prefix are all zeros.
pub fn pgg_loss_grad(table: &[Vec<f64>], target: &[u32], a: usize) -> Result<(f64, Vec<Vec<f64>>)> {
    let loss = pgg_loss(table, target, a)?;
    let scale = 1.0 / (target.len() - a) as f64;
    let grad = table
        .iter()
        .enumerate()
        .map(|(t, row)| {
            if t < a {
                return vec![0.0; row.len()];
            }
            let mut g: Vec<f64> = row.iter().map(|lp| lp.exp() * scale).collect();
            g[target[t] as usize] -= scale;
            g
        })
        .collect();
    Ok((loss, grad))
}

/// Decodes every source in parallel; `prefixes[i]` (when given) is forced
/// onto output `i`. Output order follows input order.
pub fn generate_batch<M: Seq2Seq + ?Sized>(
    model: &M,
    sources: &[Vec<u32>],
    prefixes: Option<&[Vec<u32>]>,
    config: &GenerationConfig,
) -> Result<Vec<Generation>> {
    use rayon::prelude::*;
    sources
        .par_iter()
        .enumerate()
        .map(|(i, src)| match prefixes {
            Some(p) => beam_search(
                model,
                src,
                &GenerationConfig {
                    forced_prefix: p[i].clone(),
                    ..config.clone()
                },
            ),
            None => beam_search(model, src, config),
        })
        .collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    logits.iter().map(|x| x - lse).collect()
}

pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + values.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
