//! Model tokenization and vocabularies.

use std::collections::HashMap;
use std::io::{self, BufRead, Write};
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
pub const SPECIALS: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eos>"];

static WORD_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"#\w+#|\w+|[^\w\s]").unwrap());

pub trait Tokenizer: Send + Sync {
    /// Token strings of `text`, before vocabulary lookup.
    fn pieces<'a>(&self, text: &'a str) -> Vec<&'a str>;
    /// Ids of `text` without special tokens.
    fn encode(&self, text: &str) -> Vec<u32>;
    fn decode(&self, ids: &[u32]) -> String;
    fn vocab_size(&self) -> usize;

    /// Token count of `text`; independent of the vocabulary.
    fn count(&self, text: &str) -> usize {
        self.pieces(text).len()
    }
}

/// Word-level tokenizer: `#tag#` placeholders, runs of word characters,
/// and single punctuation marks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordTokenizer {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Default for WordTokenizer {
    fn default() -> Self {
        Self::from_tokens(Vec::new())
    }
}

impl WordTokenizer {
    /// Vocabulary of the given tokens after the four specials. Duplicates
    /// and special names are skipped.
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Self {
        let mut all: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, u32> = all.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        for t in tokens {
            if !index.contains_key(&t) {
                index.insert(t.clone(), all.len() as u32);
                all.push(t);
            }
        }
        Self { tokens: all, index }
    }

    /// Builds a vocabulary from a corpus: tokens seen at least `min_freq`
    /// times, most frequent first (ties alphabetical), capped at `max_size`
    /// entries including specials.
    pub fn fit<'a>(texts: impl IntoIterator<Item = &'a str>, min_freq: usize, max_size: Option<usize>) -> Self {
        let probe = Self::default();
        let mut freq: HashMap<&str, usize> = HashMap::new();
        for text in texts {
            for p in probe.pieces(text) {
                *freq.entry(p).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = freq.into_iter().filter(|(_, n)| *n >= min_freq.max(1)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let cap = max_size.map_or(usize::MAX, |m| m.saturating_sub(SPECIALS.len()));
        Self::from_tokens(ranked.into_iter().take(cap).map(|(t, _)| t.to_string()))
    }

    pub fn token(&self, id: u32) -> &str {
        self.tokens
            .get(id as usize)
            .map_or(SPECIALS[UNK as usize], String::as_str)
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn write_vocab<W: Write>(&self, mut out: W) -> io::Result<()> {
        for t in &self.tokens {
            writeln!(out, "{t}")?;
        }
        Ok(())
    }

    /// Reads a vocabulary written by [`write_vocab`](Self::write_vocab).
    pub fn read_vocab<R: BufRead>(input: R) -> io::Result<Self> {
        let lines: Vec<String> = input.lines().collect::<io::Result<_>>()?;
        if lines.len() < SPECIALS.len() || lines[..SPECIALS.len()] != SPECIALS {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                "vocabulary must start with the special tokens",
            ));
        }
        let vocab = Self::from_tokens(lines.into_iter().skip(SPECIALS.len()));
        Ok(vocab)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        self.write_vocab(io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> io::Result<Self> {
        Self::read_vocab(io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn attaches_left(token: &str) -> bool {
    matches!(token, "." | "," | "!" | "?" | ";" | ":" | ")" | "'" | "%")
}

impl Tokenizer for WordTokenizer {
    fn pieces<'a>(&self, text: &'a str) -> Vec<&'a str> {
        WORD_RE.find_iter(text).map(|m| m.as_str()).collect()
    }

    fn encode(&self, text: &str) -> Vec<u32> {
        self.pieces(text).into_iter().map(|p| self.id(p)).collect()
    }

    fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            if matches!(id, PAD | BOS | EOS) {
                continue;
            }
            let t = self.token(id);
            if !out.is_empty() && !attaches_left(t) && !out.ends_with('(') {
                out.push(' ');
            }
            out.push_str(t);
        }
        out
    }

    fn vocab_size(&self) -> usize {
        self.tokens.len()
    }
}
