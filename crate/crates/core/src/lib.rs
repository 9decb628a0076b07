//! Dialogue summarization through dialogue-to-narrative post-training.
//!
//! The crate turns a dialogue-summarization corpus into pseudo-paraphrase
//! datasets, trains a sequence-to-sequence model with a prefix-guided loss,
//! and scores summaries with ROUGE, paired t-tests and agreement statistics.

pub mod annotate;
pub mod corpus;
pub mod eval;
pub mod prefix;
pub mod pseudo_data;
pub mod rouge;
pub mod seq2seq;
pub mod synthetic;
pub mod tokenizer;
pub mod trainer;
