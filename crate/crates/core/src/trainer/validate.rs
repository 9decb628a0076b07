//! Per-epoch validation.

use crate::corpus::{serialize_dialogue, Sample};
use crate::pseudo_data::PseudoPair;
use crate::rouge::{rouge_multi, RougeOptions};
use crate::seq2seq::{generate_batch, GenerationConfig, Seq2Seq};
use crate::tokenizer::{Tokenizer, WordTokenizer};

use super::{Result, TrainError};

#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    /// Mean ROUGE-2 F1 over the validation set.
    pub rouge2: f64,
    pub decodes: Vec<String>,
}

pub trait Validator<M>: Sync {
    fn validate(&self, model: &M) -> Result<Validation>;
}

impl<M, F> Validator<M> for F
where
    F: Fn(&M) -> Result<f64> + Sync,
{
    fn validate(&self, model: &M) -> Result<Validation> {
        Ok(Validation {
            rouge2: self(model)?,
            decodes: Vec::new(),
        })
    }
}

/// Decodes a validation set with beam search and scores it with ROUGE-2.
pub struct DecodeValidator<'a> {
    sources: Vec<Vec<u32>>,
    prefixes: Option<Vec<Vec<u32>>>,
    references: Vec<Vec<String>>,
    tokenizer: &'a WordTokenizer,
    generation: GenerationConfig,
}

impl<'a> DecodeValidator<'a> {
    /// Pseudo-paraphrase validation: the first `prefix_tokens` gold target
    /// tokens are forced onto every decode.
    pub fn for_pairs(
        pairs: &[PseudoPair],
        tokenizer: &'a WordTokenizer,
        generation: GenerationConfig,
        prefix_tokens: usize,
    ) -> Result<Self> {
        if pairs.is_empty() {
            return Err(TrainError::EmptyValidation);
        }
        let limit = generation.max_len.saturating_sub(1);
        Ok(Self {
            sources: pairs.iter().map(|p| tokenizer.encode(&p.source)).collect(),
            prefixes: Some(
                pairs
                    .iter()
                    .map(|p| {
                        tokenizer
                            .encode(&p.target)
                            .into_iter()
                            .take(prefix_tokens.min(limit))
                            .collect()
                    })
                    .collect(),
            ),
            references: pairs.iter().map(|p| vec![p.target.clone()]).collect(),
            tokenizer,
            generation,
        })
    }

    /// Summary validation without forced prefixes, against all references.
    pub fn for_samples(samples: &[Sample], tokenizer: &'a WordTokenizer, generation: GenerationConfig) -> Result<Self> {
        if samples.is_empty() {
            return Err(TrainError::EmptyValidation);
        }
        Ok(Self {
            sources: samples
                .iter()
                .map(|s| tokenizer.encode(&serialize_dialogue(&s.dialogue)))
                .collect(),
            prefixes: None,
            references: samples.iter().map(|s| s.references.clone()).collect(),
            tokenizer,
            generation,
        })
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }
}

impl<M: Seq2Seq> Validator<M> for DecodeValidator<'_> {
    fn validate(&self, model: &M) -> Result<Validation> {
        let outputs = generate_batch(model, &self.sources, self.prefixes.as_deref(), &self.generation)?;
        let decodes: Vec<String> = outputs.iter().map(|g| self.tokenizer.decode(&g.tokens)).collect();
        let mut total = 0.0;
        for (d, refs) in decodes.iter().zip(&self.references) {
            total += rouge_multi(d, refs, RougeOptions::default())
                .expect("validation references are non-empty")
                .r2
                .f1;
        }
        Ok(Validation {
            rouge2: total / decodes.len() as f64,
            decodes,
        })
    }
}
