//! Linguistic annotation: sentences, coarse part-of-speech tags, the
//! dependency root of each sentence, and coreference chains.
//!
//! Two backends implement [`Annotator`]. [`ExternalAnnotator`] drives a pool
//! of child processes speaking a line-delimited JSON protocol (for example a
//! spaCy wrapper). [`FallbackAnnotator`] is a deterministic rule-based tagger
//! that needs nothing outside this crate.
//!
//! All offsets stored here are byte offsets. The wire protocol carries
//! character offsets and is converted on the way in and out.

mod external;
mod fallback;
pub(crate) mod lexicon;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use external::{wire_response, ExternalAnnotator, ANNOTATOR_CMD_ENV};
pub use fallback::{split_sentences, FallbackAnnotator};

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("annotator unreachable: {0}")]
    Unreachable(String),
    #[error("annotator protocol violation ({reason}); raw response: {raw}")]
    Protocol { reason: String, raw: String },
    #[error("overlapping replacement spans at bytes {first:?} and {second:?}")]
    OverlappingSpans {
        first: (usize, usize),
        second: (usize, usize),
    },
    #[error("invalid annotation: {0}")]
    Invalid(String),
}

pub type Result<T, E = AnnotateError> = std::result::Result<T, E>;

/// Coarse part-of-speech classes used by the prefix policies and the
/// fallback coreference rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pos {
    Noun,
    Propn,
    Verb,
    Pron,
    Other,
}

impl Pos {
    /// Maps a Universal Dependencies tag onto the coarse set.
    pub fn from_tag(tag: &str) -> Pos {
        match tag.to_ascii_uppercase().as_str() {
            "NOUN" => Pos::Noun,
            "PROPN" => Pos::Propn,
            "VERB" => Pos::Verb,
            "PRON" => Pos::Pron,
            _ => Pos::Other,
        }
    }

    pub fn as_tag(self) -> &'static str {
        match self {
            Pos::Noun => "NOUN",
            Pos::Propn => "PROPN",
            Pos::Verb => "VERB",
            Pos::Pron => "PRON",
            Pos::Other => "OTHER",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Word {
    pub text: String,
    pub pos: Pos,
    pub is_root: bool,
    /// Byte span `[start, end)` inside the sentence text.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceAnnotation {
    pub text: String,
    /// Byte offset of the sentence inside the annotated document.
    pub offset: usize,
    pub words: Vec<Word>,
}

impl SentenceAnnotation {
    pub fn root(&self) -> Option<usize> {
        self.words.iter().position(|w| w.is_root)
    }

    fn check(&self) -> std::result::Result<(), String> {
        let roots = self.words.iter().filter(|w| w.is_root).count();
        if roots != 1 {
            return Err(format!("sentence {:?} has {roots} roots", self.text));
        }
        let mut cursor = 0;
        for w in &self.words {
            if w.start < cursor || w.end < w.start || w.end > self.text.len() {
                return Err(format!("word {:?} has an invalid span", w.text));
            }
            if self.text.get(w.start..w.end) != Some(w.text.as_str()) {
                return Err(format!("word {:?} does not match its span", w.text));
            }
            cursor = w.end;
        }
        Ok(())
    }
}

/// A mention: sentence index plus byte span inside that sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mention {
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorefChain {
    pub mentions: Vec<Mention>,
    /// Index into `mentions` of the non-pronominal mention used for substitution.
    pub representative: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub sentences: Vec<SentenceAnnotation>,
    pub chains: Vec<CorefChain>,
}

impl Annotation {
    /// Words of a mention span.
    pub fn mention_words(&self, m: &Mention) -> &[Word] {
        let Some(s) = self.sentences.get(m.sentence) else {
            return &[];
        };
        let first = s.words.iter().position(|w| w.start >= m.start);
        let last = s.words.iter().rposition(|w| w.end <= m.end);
        match (first, last) {
            (Some(a), Some(b)) if a <= b => &s.words[a..=b],
            _ => &[],
        }
    }

    pub fn mention_text(&self, m: &Mention) -> Option<&str> {
        self.sentences.get(m.sentence)?.text.get(m.start..m.end)
    }

    /// Checks the structural invariants against the source text.
    pub fn validate(&self, text: &str) -> Result<()> {
        let mut cursor = 0;
        for s in &self.sentences {
            s.check().map_err(AnnotateError::Invalid)?;
            if s.offset < cursor || text.get(s.offset..s.offset + s.text.len()) != Some(s.text.as_str()) {
                return Err(AnnotateError::Invalid(format!(
                    "sentence {:?} is not at offset {}",
                    s.text, s.offset
                )));
            }
            cursor = s.offset + s.text.len();
        }
        for chain in &self.chains {
            if chain.mentions.len() < 2 || chain.representative >= chain.mentions.len() {
                return Err(AnnotateError::Invalid(
                    "chain needs two mentions and a representative".into(),
                ));
            }
            for m in &chain.mentions {
                if self.mention_text(m).is_none() || self.mention_words(m).is_empty() {
                    return Err(AnnotateError::Invalid(format!("mention {m:?} is out of range")));
                }
            }
            let rep = &chain.mentions[chain.representative];
            let head = self.mention_words(rep).last().expect("checked above");
            if head.pos == Pos::Pron {
                return Err(AnnotateError::Invalid(format!(
                    "representative {:?} is pronominal",
                    head.text
                )));
            }
        }
        Ok(())
    }
}

/// Anything that can annotate a text.
pub trait Annotator: Send + Sync {
    fn annotate(&self, text: &str) -> Result<Annotation>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    External,
    Fallback,
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "external" => Ok(Backend::External),
            "fallback" => Ok(Backend::Fallback),
            other => Err(format!("unknown annotation backend `{other}`")),
        }
    }
}

/// Annotates with the requested backend. The external backend reads its
/// command line from the environment and uses a single worker.
pub fn annotate(text: &str, backend: Backend) -> Result<Annotation> {
    match backend {
        Backend::Fallback => FallbackAnnotator.annotate(text),
        Backend::External => ExternalAnnotator::from_env(1)?.annotate(text),
    }
}

/// True when a pronoun at `index` is used as a possessive determiner.
pub(crate) fn is_possessive(words: &[Word], index: usize) -> bool {
    let lower = words[index].text.to_lowercase();
    if lexicon::contains(lexicon::POSSESSIVE_PRONOUNS, &lower) {
        return true;
    }
    if lower != "her" {
        return false;
    }
    match words.get(index + 1) {
        None => false,
        Some(next) => {
            let nl = next.text.to_lowercase();
            next.text.chars().any(char::is_alphanumeric)
                && next.pos != Pos::Pron
                && !lexicon::contains(lexicon::FUNCTION_WORDS, &nl)
                && !lexicon::contains(lexicon::AUXILIARIES, &nl)
        }
    }
}

/// Replaces every pronominal chain mention with the text of its chain's
/// representative. Text outside replaced spans is left byte-identical.
pub fn resolve_coreferences(text: &str, annotation: &Annotation) -> Result<String> {
    let mut edits: Vec<(usize, usize, &str)> = Vec::new();
    for chain in &annotation.chains {
        let Some(rep) = chain.mentions.get(chain.representative) else {
            continue;
        };
        let Some(rep_text) = annotation.mention_text(rep) else {
            continue;
        };
        for (i, m) in chain.mentions.iter().enumerate() {
            if i == chain.representative {
                continue;
            }
            let sentence = &annotation.sentences[m.sentence];
            let words = annotation.mention_words(m);
            let [word] = words else { continue };
            if word.pos != Pos::Pron {
                continue;
            }
            let idx = sentence
                .words
                .iter()
                .position(|w| w.start == word.start)
                .expect("word comes from this sentence");
            if is_possessive(&sentence.words, idx) {
                continue;
            }
            let start = sentence.offset + word.start;
            edits.push((start, sentence.offset + word.end, rep_text));
        }
    }
    edits.sort_by_key(|e| (e.0, e.1));
    for pair in edits.windows(2) {
        if pair[1].0 < pair[0].1 {
            return Err(AnnotateError::OverlappingSpans {
                first: (pair[0].0, pair[0].1),
                second: (pair[1].0, pair[1].1),
            });
        }
    }
    let mut out = text.to_string();
    for (start, end, rep) in edits.into_iter().rev() {
        out.replace_range(start..end, rep);
    }
    Ok(out)
}

/// Annotates `text` and returns it with pronouns resolved.
pub fn resolve_with(annotator: &dyn Annotator, text: &str) -> Result<String> {
    let annotation = annotator.annotate(text)?;
    resolve_coreferences(text, &annotation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TABLE1: &str = "Katarina wants to rent a flat from Liz. She will come visit it today after 6 pm.";

    fn chain_texts(a: &Annotation) -> Vec<Vec<String>> {
        a.chains
            .iter()
            .map(|c| {
                c.mentions
                    .iter()
                    .map(|m| a.mention_text(m).unwrap().to_string())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn table1_summary_annotation() {
        let a = FallbackAnnotator.annotate(TABLE1).unwrap();
        a.validate(TABLE1).unwrap();
        assert_eq!(a.sentences.len(), 2);
        assert_eq!(chain_texts(&a), vec![vec!["Katarina".to_string(), "She".to_string()]]);
        let rep = &a.chains[0].mentions[a.chains[0].representative];
        assert_eq!(a.mention_text(rep), Some("Katarina"));
    }

    #[test]
    fn table1_summary_resolution() {
        let resolved = resolve_with(&FallbackAnnotator, TABLE1).unwrap();
        assert_eq!(
            resolved,
            "Katarina wants to rent a flat from Liz. Katarina will come visit it today after 6 pm."
        );
    }

    #[test]
    fn single_greeting_has_no_chains() {
        let a = FallbackAnnotator.annotate("Hi.").unwrap();
        assert_eq!(a.sentences.len(), 1);
        assert!(a.chains.is_empty());
    }

    #[test]
    fn bob_left_he_slept() {
        let a = FallbackAnnotator.annotate("Bob left. He slept.").unwrap();
        assert_eq!(chain_texts(&a), vec![vec!["Bob".to_string(), "He".to_string()]]);
        assert_eq!(
            resolve_with(&FallbackAnnotator, "Bob left. He slept.").unwrap(),
            "Bob left. Bob slept."
        );
    }

    #[test]
    fn subject_and_object_pronouns_follow_roles() {
        let out = resolve_with(&FallbackAnnotator, "Ann called Bo. She thanked him.").unwrap();
        assert_eq!(out, "Ann called Bo. Ann thanked Bo.");
    }

    #[test]
    fn text_without_pronouns_is_unchanged() {
        let t = "Greg advises Kate to call Linda.";
        assert_eq!(resolve_with(&FallbackAnnotator, t).unwrap(), t);
    }

    #[test]
    fn it_and_possessives_are_left_alone() {
        let t = "Kate broke her arm. It hurts and she cries.";
        assert_eq!(
            resolve_with(&FallbackAnnotator, t).unwrap(),
            "Kate broke her arm. It hurts and Kate cries."
        );
    }

    #[test]
    fn overlapping_edits_are_rejected() {
        let mut a = FallbackAnnotator.annotate("Bob left. He slept.").unwrap();
        let dup = a.chains[0].clone();
        a.chains.push(dup);
        assert!(matches!(
            resolve_coreferences("Bob left. He slept.", &a),
            Err(AnnotateError::OverlappingSpans { .. })
        ));
    }

    #[test]
    fn pronominal_representative_fails_validation() {
        let t = "Bob left. He slept.";
        let mut a = FallbackAnnotator.annotate(t).unwrap();
        a.chains[0].representative = 1;
        assert!(a.validate(t).is_err());
    }

    fn sentence() -> impl Strategy<Value = String> {
        let subj = prop::sample::select(vec!["Ann", "Bob", "Katarina", "She", "He", "They", "Liz"]);
        let verb = prop::sample::select(vec!["called", "wants to meet", "will visit", "thanked", "left"]);
        let obj = prop::sample::select(vec!["Bo", "him", "her", "them", "the flat", "it", "Greg"]);
        let tail = prop::sample::select(vec!["", " today", " after 6 pm", " at home"]);
        (subj, verb, obj, tail).prop_map(|(s, v, o, t)| format!("{s} {v} {o}{t}."))
    }

    proptest! {
        #[test]
        fn resolution_is_idempotent(sents in prop::collection::vec(sentence(), 1..5)) {
            let text = sents.join(" ");
            let once = resolve_with(&FallbackAnnotator, &text).unwrap();
            let twice = resolve_with(&FallbackAnnotator, &once).unwrap();
            prop_assert_eq!(&once, &twice);
        }

        #[test]
        fn resolution_never_shrinks_below_replaced_count(sents in prop::collection::vec(sentence(), 1..5)) {
            let text = sents.join(" ");
            let a = FallbackAnnotator.annotate(&text).unwrap();
            a.validate(&text).unwrap();
            let replaced: usize = a.chains.iter().map(|c| c.mentions.len() - 1).sum();
            let out = resolve_coreferences(&text, &a).unwrap();
            let before = crate::corpus::word_count(&text);
            prop_assert!(crate::corpus::word_count(&out) + replaced >= before);
        }
    }
}
