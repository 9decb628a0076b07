//! Post-training datasets built from dialogue-summary samples.
//!
//! * `DSum`: the original pairs.
//! * `DialSent`: the full dialogue paired with each coreference-resolved
//!   summary sentence of at least three words.
//! * `DialIndirect`: the dialogue paired with every turn rewritten as
//!   `speaker says,"text"`.
//! * `ExtSum`/`ExtSumM`: greedily extracted turns paired with the summary.
//! * `ExtSent`/`ExtSentM`: turns extracted per resolved summary sentence.
//!
//! The `M` variants widen the extracted turns to the contiguous range
//! between the first and last selected turn.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotate::{resolve_with, AnnotateError, Annotator};
use crate::corpus::{serialize_dialogue, word_count, Dialogue, Sample};
use crate::rouge::{normalize, rouge_n_tokens, RougeOptions};

/// Shortest summary sentence (in whitespace words) kept as a target.
pub const MIN_SENTENCE_WORDS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    DSum,
    DialSent,
    DialIndirect,
    ExtSum,
    ExtSumM,
    ExtSent,
    ExtSentM,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::DSum,
        Variant::DialSent,
        Variant::DialIndirect,
        Variant::ExtSum,
        Variant::ExtSumM,
        Variant::ExtSent,
        Variant::ExtSentM,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::DSum => "dsum",
            Variant::DialSent => "dialsent",
            Variant::DialIndirect => "dialindirect",
            Variant::ExtSum => "extsum",
            Variant::ExtSumM => "extsumm",
            Variant::ExtSent => "extsent",
            Variant::ExtSentM => "extsentm",
        }
    }

    /// Variants whose targets are single summary sentences.
    pub fn is_sentence_level(self) -> bool {
        matches!(self, Variant::DialSent | Variant::ExtSent | Variant::ExtSentM)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown dataset variant `{s}`"))
    }
}

/// One post-training pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoPair {
    pub source: String,
    pub target: String,
    pub origin_id: String,
    pub sent_index: Option<usize>,
    pub variant: Variant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix_tokens: Option<usize>,
}

impl PseudoPair {
    fn new(source: String, target: String, origin_id: &str, sent_index: Option<usize>, variant: Variant) -> Self {
        Self {
            source,
            target,
            origin_id: origin_id.to_string(),
            sent_index,
            variant,
            prefix_tokens: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    /// Selected turn indices, strictly increasing.
    pub indices: Vec<usize>,
    /// Objective of the returned selection.
    pub score: f64,
    /// Objective after each greedy addition.
    pub trajectory: Vec<f64>,
}

pub fn build_dsum(samples: &[Sample]) -> Vec<PseudoPair> {
    samples
        .iter()
        .map(|s| {
            PseudoPair::new(
                serialize_dialogue(&s.dialogue),
                s.summary().to_string(),
                s.id(),
                None,
                Variant::DSum,
            )
        })
        .collect()
}

/// Coreference-resolves a summary and returns its sentences that have at
/// least [`MIN_SENTENCE_WORDS`] words, with their index in the resolved text.
pub fn summary_sentences(annotator: &dyn Annotator, summary: &str) -> Result<Vec<(usize, String)>, AnnotateError> {
    let resolved = resolve_with(annotator, summary)?;
    let sentences = annotator.annotate(&resolved)?.sentences;
    Ok(sentences
        .into_iter()
        .enumerate()
        .map(|(i, s)| (i, s.text.trim().to_string()))
        .filter(|(_, s)| word_count(s) >= MIN_SENTENCE_WORDS)
        .collect())
}

fn per_sample<F>(samples: &[Sample], build: F) -> Result<Vec<PseudoPair>, AnnotateError>
where
    F: Fn(&Sample) -> Result<Vec<PseudoPair>, AnnotateError> + Sync,
{
    let nested: Vec<Vec<PseudoPair>> = samples.par_iter().map(&build).collect::<Result<_, _>>()?;
    Ok(nested.into_iter().flatten().collect())
}

pub fn build_dialsent(samples: &[Sample], annotator: &dyn Annotator) -> Result<Vec<PseudoPair>, AnnotateError> {
    per_sample(samples, |s| {
        let source = serialize_dialogue(&s.dialogue);
        let sentences = summary_sentences(annotator, s.summary())?;
        if sentences.is_empty() {
            log::debug!(
                "sample {} has no summary sentence with {MIN_SENTENCE_WORDS}+ words",
                s.id()
            );
        }
        Ok(sentences
            .into_iter()
            .map(|(i, target)| PseudoPair::new(source.clone(), target, s.id(), Some(i), Variant::DialSent))
            .collect())
    })
}

/// Rewrites every turn as `speaker says,"text"`, space-joined.
pub fn indirect_speech(dialogue: &Dialogue) -> String {
    dialogue
        .turns
        .iter()
        .map(|t| format!("{} says,\"{}\"", t.speaker, t.text))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn build_dialindirect(samples: &[Sample]) -> Vec<PseudoPair> {
    samples
        .iter()
        .map(|s| {
            PseudoPair::new(
                serialize_dialogue(&s.dialogue),
                indirect_speech(&s.dialogue),
                s.id(),
                None,
                Variant::DialIndirect,
            )
        })
        .collect()
}

fn objective(selected: &[usize], turns: &[Vec<String>], target: &[String]) -> f64 {
    let tokens: Vec<&String> = selected.iter().flat_map(|&i| turns[i].iter()).collect();
    let target: Vec<&String> = target.iter().collect();
    let r1 = rouge_n_tokens(&tokens, &target, 1).f1;
    let r2 = rouge_n_tokens(&tokens, &target, 2).f1;
    (r1 + r2) / 2.0
}

/// Greedy oracle extraction of dialogue turns against a target text.
///
/// Each round adds the turn that most increases the mean of ROUGE-1 and
/// ROUGE-2 F1 (selected turns rendered in dialogue order); ties go to the
/// lowest index. Stops when no addition strictly improves. With `modified`
/// the selection is widened to every turn between the first and last pick.
pub fn oracle_extract(dialogue: &Dialogue, target: &str, modified: bool) -> ExtractionResult {
    let opts = RougeOptions::default();
    let turns: Vec<Vec<String>> = dialogue.turns.iter().map(|t| normalize(&t.render(), opts)).collect();
    let target = normalize(target, opts);
    let mut selected: Vec<usize> = Vec::new();
    let mut current = 0.0;
    let mut trajectory = Vec::new();
    while selected.len() < turns.len() {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..turns.len()).filter(|i| !selected.contains(i)) {
            let mut trial = selected.clone();
            trial.push(i);
            trial.sort_unstable();
            let score = objective(&trial, &turns, &target);
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((i, score));
            }
        }
        match best {
            Some((i, score)) if score > current => {
                selected.push(i);
                selected.sort_unstable();
                current = score;
                trajectory.push(score);
            }
            _ => break,
        }
    }
    if selected.is_empty() {
        selected.push(0);
    }
    if modified {
        let (lo, hi) = (selected[0], *selected.last().expect("non-empty"));
        selected = (lo..=hi).collect();
    }
    let score = objective(&selected, &turns, &target);
    ExtractionResult {
        indices: selected,
        score,
        trajectory,
    }
}

fn extracted_source(dialogue: &Dialogue, target: &str, modified: bool) -> String {
    let result = oracle_extract(dialogue, target, modified);
    serialize_dialogue(&dialogue.select(&result.indices))
}

pub fn build_extsum(samples: &[Sample], modified: bool) -> Vec<PseudoPair> {
    let variant = if modified { Variant::ExtSumM } else { Variant::ExtSum };
    samples
        .par_iter()
        .map(|s| {
            let source = extracted_source(&s.dialogue, s.summary(), modified);
            PseudoPair::new(source, s.summary().to_string(), s.id(), None, variant)
        })
        .collect()
}

pub fn build_extsent(
    samples: &[Sample],
    modified: bool,
    annotator: &dyn Annotator,
) -> Result<Vec<PseudoPair>, AnnotateError> {
    let variant = if modified { Variant::ExtSentM } else { Variant::ExtSent };
    per_sample(samples, |s| {
        Ok(summary_sentences(annotator, s.summary())?
            .into_iter()
            .map(|(i, target)| {
                let source = extracted_source(&s.dialogue, &target, modified);
                PseudoPair::new(source, target, s.id(), Some(i), variant)
            })
            .collect())
    })
}

/// Builds any variant.
pub fn build(
    variant: Variant,
    samples: &[Sample],
    annotator: &dyn Annotator,
) -> Result<Vec<PseudoPair>, AnnotateError> {
    Ok(match variant {
        Variant::DSum => build_dsum(samples),
        Variant::DialSent => build_dialsent(samples, annotator)?,
        Variant::DialIndirect => build_dialindirect(samples),
        Variant::ExtSum => build_extsum(samples, false),
        Variant::ExtSumM => build_extsum(samples, true),
        Variant::ExtSent => build_extsent(samples, false, annotator)?,
        Variant::ExtSentM => build_extsent(samples, true, annotator)?,
    })
}

/// Writes pairs as JSON lines.
pub fn write_pairs<W: std::io::Write>(pairs: &[PseudoPair], mut out: W) -> std::io::Result<()> {
    for p in pairs {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Reads JSON-line pairs, skipping blank lines.
pub fn read_pairs<R: std::io::BufRead>(input: R) -> std::io::Result<Vec<PseudoPair>> {
    let mut pairs = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: PseudoPair = serde_json::from_str(&line)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("pair line {}: {e}", i + 1)))?;
        if p.source.trim().is_empty() || p.target.trim().is_empty() {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("pair line {}: empty source or target", i + 1),
            ));
        }
        pairs.push(p);
    }
    Ok(pairs)
}
