//! Beam-search decoding.

use serde::{Deserialize, Serialize};

use super::{ModelError, Result, Seq2Seq};
use crate::tokenizer::{BOS, EOS, PAD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub beam_size: usize,
    pub length_penalty: f64,
    /// Ban any n-gram of this size from occurring twice; 0 disables.
    pub no_repeat_ngram: usize,
    /// Bounds on the number of output tokens (the end token excluded).
    pub min_len: usize,
    pub max_len: usize,
    /// Tokens the output must start with.
    pub forced_prefix: Vec<u32>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            beam_size: 4,
            length_penalty: 1.0,
            no_repeat_ngram: 3,
            min_len: 1,
            max_len: 100,
            forced_prefix: Vec::new(),
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(ModelError::InvalidConfig("beam size must be at least 1".into()));
        }
        if self.min_len > self.max_len {
            return Err(ModelError::InvalidConfig(format!(
                "min_len {} exceeds max_len {}",
                self.min_len, self.max_len
            )));
        }
        if self.forced_prefix.len() >= self.max_len {
            return Err(ModelError::InvalidConfig(
                "forced prefix must be shorter than max_len".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    /// Output ids, without start or end tokens.
    pub tokens: Vec<u32>,
    /// Length-normalized log-probability of the generated (non-forced) part.
    pub score: f64,
    /// Set when every continuation of every beam was banned before any
    /// hypothesis finished; `tokens` is then the best partial hypothesis.
    pub truncated: bool,
}

#[derive(Debug, Clone)]
struct Hyp {
    tokens: Vec<u32>,
    logp: f64,
    steps: usize,
}

impl Hyp {
    fn score(&self, alpha: f64) -> f64 {
        self.logp / (self.steps.max(1) as f64).powf(alpha)
    }
}

fn repeats_ngram(tokens: &[u32], next: u32, n: usize) -> bool {
    if n == 0 || tokens.len() + 1 < n {
        return false;
    }
    let tail = &tokens[tokens.len() + 1 - n..];
    tokens.windows(n).any(|w| w[..n - 1] == *tail && w[n - 1] == next)
}

fn best(hyps: Vec<Hyp>, alpha: f64) -> Option<Hyp> {
    hyps.into_iter().fold(None, |acc: Option<Hyp>, h| match acc {
        Some(a) if a.score(alpha) >= h.score(alpha) => Some(a),
        _ => Some(h),
    })
}

/// Decodes `source` with beam search.
///
/// Hypotheses are ranked by summed log-probability divided by
/// `steps^length_penalty`. The end token is banned until `min_len` output
/// tokens exist, and a hypothesis reaching `max_len` tokens is closed.
/// Search stops once `beam_size` hypotheses have finished.
pub fn beam_search<M: Seq2Seq + ?Sized>(model: &M, source: &[u32], config: &GenerationConfig) -> Result<Generation> {
    config.validate()?;
    let alpha = config.length_penalty;
    let encoded = model.encode(source);
    let mut beams = vec![Hyp {
        tokens: config.forced_prefix.clone(),
        logp: 0.0,
        steps: 0,
    }];
    let mut finished: Vec<Hyp> = Vec::new();
    let mut last_live = beams.clone();
    while !beams.is_empty() && finished.len() < config.beam_size {
        let mut candidates: Vec<(f64, usize, u32)> = Vec::new();
        for (b, hyp) in beams.iter().enumerate() {
            let inputs: Vec<u32> = std::iter::once(BOS).chain(hyp.tokens.iter().copied()).collect();
            let lp = model.next_logprobs(&encoded, &inputs);
            for (v, &l) in lp.iter().enumerate() {
                let v = v as u32;
                let banned = v == PAD
                    || v == BOS
                    || (v == EOS && hyp.tokens.len() < config.min_len)
                    || (v != EOS && repeats_ngram(&hyp.tokens, v, config.no_repeat_ngram))
                    || !l.is_finite();
                if !banned {
                    candidates.push((hyp.logp + l, b, v));
                }
            }
        }
        if candidates.is_empty() {
            last_live = beams;
            break;
        }
        candidates.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        let mut next = Vec::with_capacity(config.beam_size);
        for (logp, b, v) in candidates {
            if next.len() == config.beam_size {
                break;
            }
            let parent = &beams[b];
            if v == EOS {
                finished.push(Hyp {
                    tokens: parent.tokens.clone(),
                    logp,
                    steps: parent.steps + 1,
                });
                if finished.len() == config.beam_size {
                    break;
                }
                continue;
            }
            let mut tokens = parent.tokens.clone();
            tokens.push(v);
            let hyp = Hyp {
                tokens,
                logp,
                steps: parent.steps + 1,
            };
            if hyp.tokens.len() >= config.max_len {
                finished.push(hyp);
            } else {
                next.push(hyp);
            }
        }
        beams = next;
    }
    if let Some(h) = best(finished, alpha) {
        return Ok(Generation {
            score: h.score(alpha),
            tokens: h.tokens,
            truncated: false,
        });
    }
    let h = best(last_live, alpha).expect("at least one live hypothesis");
    Ok(Generation {
        score: h.score(alpha),
        tokens: h.tokens,
        truncated: true,
    })
}
