//! Rule-based annotator.
//!
//! Sentence boundaries come from terminal punctuation followed by whitespace
//! and a non-lowercase character. Tags come from closed-class word lists,
//! capitalization and suffixes. The root is the first finite verb. Third
//! person pronouns (he/she/they, him/her/them) are linked to the nearest
//! preceding proper-noun mention with the same grammatical role (before or
//! after the root), or to the nearest one of any role. `it` is never linked.

use std::sync::OnceLock;

use regex::Regex;

use super::lexicon::{self, contains};
use super::{Annotation, Annotator, CorefChain, Mention, Pos, Result, SentenceAnnotation, Word};

#[derive(Debug, Clone, Copy, Default)]
pub struct FallbackAnnotator;

impl Annotator for FallbackAnnotator {
    fn annotate(&self, text: &str) -> Result<Annotation> {
        let mut sentences = Vec::new();
        let mut offset = 0;
        for piece in split_sentences(text) {
            let lead = piece.len() - piece.trim_start().len();
            let body = piece.trim();
            if !body.is_empty() {
                sentences.push(tag_sentence(body, offset + lead));
            }
            offset += piece.len();
        }
        let chains = link_pronouns(&sentences);
        Ok(Annotation { sentences, chains })
    }
}

const TERMINATORS: &[char] = &['.', '!', '?', '…'];
const CLOSERS: &[char] = &['"', '\'', ')', ']', '”', '’'];

/// Splits text into sentences. Each piece keeps the whitespace that follows
/// it, so concatenating the pieces reproduces the input exactly.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        let is_break = TERMINATORS.contains(&c) || c == '\n';
        if !is_break {
            i += 1;
            continue;
        }
        let mut j = i;
        while j < chars.len() && (TERMINATORS.contains(&chars[j].1) || CLOSERS.contains(&chars[j].1)) {
            j += 1;
        }
        if c == '\n' {
            j = i;
        }
        let mut k = j;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        let end = chars.get(k).map_or(text.len(), |&(p, _)| p);
        if k == chars.len() {
            break;
        }
        let has_gap = k > j;
        let next_lower = chars[k].1.is_lowercase();
        let abbreviation = c == '.' && is_abbreviation(&text[start..pos]);
        if has_gap && !next_lower && !abbreviation {
            pieces.push(&text[start..end]);
            start = end;
        }
        i = k.max(i + 1);
    }
    if start < text.len() || pieces.is_empty() && !text.is_empty() {
        pieces.push(&text[start..]);
    }
    pieces
}

fn is_abbreviation(before: &str) -> bool {
    let last = before
        .rsplit(|c: char| c.is_whitespace())
        .next()
        .unwrap_or("")
        .trim_start_matches(['(', '"', '\'']);
    contains(lexicon::ABBREVIATIONS, &last.to_lowercase())
}

fn token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"#[^#\s]+#|[\p{L}\p{N}]+(?:['’][\p{L}\p{N}]+)*|\S").expect("valid regex"))
}

/// Word spans, with English clitics split off the way dependency treebanks do.
fn tokenize(sentence: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    for m in token_re().find_iter(sentence) {
        let word = m.as_str();
        let lower = word.to_lowercase();
        let (s, e) = (m.start(), m.end());
        if lower.len() > 3 && lower.ends_with("n't") {
            let cut = e - 3;
            spans.push((s, cut));
            spans.push((cut, e));
            continue;
        }
        let apos = word.char_indices().find(|&(_, c)| c == '\'' || c == '’');
        if let Some((at, _)) = apos {
            let suffix: String = lower[at..].replace('’', "'");
            if at > 0 && ["'s", "'re", "'ll", "'ve", "'d", "'m"].contains(&suffix.as_str()) {
                spans.push((s, s + at));
                spans.push((s + at, e));
                continue;
            }
        }
        spans.push((s, e));
    }
    spans
}

fn is_capitalized(word: &str) -> bool {
    word.chars().next().is_some_and(char::is_uppercase)
}

fn tag_word(words: &[&str], i: usize) -> Pos {
    let word = words[i];
    let lower = word.to_lowercase().replace('’', "'");
    if !word.chars().any(char::is_alphanumeric) {
        return Pos::Other;
    }
    if word.starts_with('#') && word.ends_with('#') && word.len() > 2 {
        return Pos::Propn;
    }
    if contains(lexicon::PRONOUNS, &lower) {
        return Pos::Pron;
    }
    if contains(lexicon::AUXILIARIES, &lower) {
        return Pos::Other;
    }
    if word.chars().all(|c| c.is_numeric() || c == '.' || c == ',') {
        return Pos::Other;
    }
    let prev = i.checked_sub(1).map(|p| words[p].to_lowercase());
    let after_det = prev.as_deref().is_some_and(|p| contains(lexicon::DETERMINERS, p));
    let after_verb_marker = prev
        .as_deref()
        .is_some_and(|p| p == "to" || (contains(lexicon::AUXILIARIES, p) && p != "'s"));
    let initial = words[..i].iter().all(|w| !w.chars().any(char::is_alphanumeric));
    if is_capitalized(word) {
        if !initial {
            return Pos::Propn;
        }
        if lexicon::is_known_verb(&lower) {
            return Pos::Verb;
        }
        if contains(lexicon::FUNCTION_WORDS, &lower) || contains(lexicon::SENTENCE_OPENERS, &lower) {
            return Pos::Other;
        }
        return Pos::Propn;
    }
    if after_det && !contains(lexicon::FUNCTION_WORDS, &lower) {
        return Pos::Noun;
    }
    if after_verb_marker && !contains(lexicon::FUNCTION_WORDS, &lower) {
        return Pos::Verb;
    }
    if lexicon::is_known_verb(&lower) {
        return Pos::Verb;
    }
    if contains(lexicon::FUNCTION_WORDS, &lower) {
        return Pos::Other;
    }
    let len = lower.chars().count();
    if len > 4 && (lower.ends_with("ing") || lower.ends_with("ed")) {
        return Pos::Verb;
    }
    if len > 3 && (lower.ends_with("ly") || lower.ends_with("ful") || lower.ends_with("ous")) {
        return Pos::Other;
    }
    Pos::Noun
}

fn tag_sentence(text: &str, offset: usize) -> SentenceAnnotation {
    let spans = tokenize(text);
    let strs: Vec<&str> = spans.iter().map(|&(s, e)| &text[s..e]).collect();
    let tags: Vec<Pos> = (0..strs.len()).map(|i| tag_word(&strs, i)).collect();
    let root = find_root(&strs, &tags);
    let words = spans
        .iter()
        .zip(&tags)
        .enumerate()
        .map(|(i, (&(start, end), &pos))| Word {
            text: text[start..end].to_string(),
            pos,
            is_root: Some(i) == root,
            start,
            end,
        })
        .collect();
    SentenceAnnotation {
        text: text.to_string(),
        offset,
        words,
    }
}

fn find_root(words: &[&str], tags: &[Pos]) -> Option<usize> {
    if words.is_empty() {
        return None;
    }
    let finite =
        (0..words.len()).find(|&i| tags[i] == Pos::Verb && !(i > 0 && words[i - 1].eq_ignore_ascii_case("to")));
    let any_verb = || tags.iter().position(|&t| t == Pos::Verb);
    let aux = || {
        words
            .iter()
            .position(|w| contains(lexicon::AUXILIARIES, &w.to_lowercase()))
    };
    finite.or_else(any_verb).or_else(aux).or(Some(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Subject,
    Object,
}

struct NameMention {
    mention: Mention,
    role: Role,
}

fn role_of(sentence: &SentenceAnnotation, word_index: usize) -> Role {
    match sentence.root() {
        Some(r) if word_index > r => Role::Object,
        _ => Role::Subject,
    }
}

fn link_pronouns(sentences: &[SentenceAnnotation]) -> Vec<CorefChain> {
    let mut names: Vec<NameMention> = Vec::new();
    // chain index per entry in `names`
    let mut chain_of: Vec<Option<usize>> = Vec::new();
    let mut chains: Vec<CorefChain> = Vec::new();
    for (si, sentence) in sentences.iter().enumerate() {
        let words = &sentence.words;
        let mut i = 0;
        while i < words.len() {
            let w = &words[i];
            if w.pos == Pos::Propn {
                let mut j = i;
                while j + 1 < words.len() && words[j + 1].pos == Pos::Propn && words[j + 1].start == words[j].end + 1 {
                    j += 1;
                }
                names.push(NameMention {
                    mention: Mention {
                        sentence: si,
                        start: w.start,
                        end: words[j].end,
                    },
                    role: role_of(sentence, i),
                });
                chain_of.push(None);
                i = j + 1;
                continue;
            }
            let lower = w.text.to_lowercase();
            let wanted = if contains(lexicon::SUBJECT_PRONOUNS, &lower) {
                Some(Role::Subject)
            } else if contains(lexicon::OBJECT_PRONOUNS, &lower) && !super::is_possessive(words, i) {
                Some(Role::Object)
            } else {
                None
            };
            if let (Some(role), Pos::Pron) = (wanted, w.pos) {
                let antecedent = names
                    .iter()
                    .rposition(|n| n.role == role)
                    .or_else(|| names.len().checked_sub(1));
                if let Some(a) = antecedent {
                    let pron = Mention {
                        sentence: si,
                        start: w.start,
                        end: w.end,
                    };
                    match chain_of[a] {
                        Some(c) => chains[c].mentions.push(pron),
                        None => {
                            chain_of[a] = Some(chains.len());
                            chains.push(CorefChain {
                                mentions: vec![names[a].mention, pron],
                                representative: 0,
                            });
                        }
                    }
                }
            }
            i += 1;
        }
    }
    chains
}
