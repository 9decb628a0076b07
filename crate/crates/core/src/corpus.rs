//! Dialogue-summarization corpora: loading, canonical serialization and
//! corpus statistics.
//!
//! Two source layouts are understood. SAMSum ships a JSON array of
//! `{id, dialogue, summary}` records whose dialogue is one string of
//! `Speaker: text` lines separated by `\r\n`. DialSumm ships line-delimited
//! `{fname, dialogue, summary}` records, with `summary1..3` on the test split.
//! Both are normalized into [`Sample`]s and can be written back out as the
//! canonical line-delimited format `{id, turns, references}`.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0} contains no records")]
    EmptyFile(PathBuf),
    #[error("record {index}: missing field `{field}`")]
    MissingField { index: usize, field: &'static str },
    #[error("empty reference at index {index}")]
    EmptyReference { index: usize },
    #[error("record {index}: {message}")]
    Malformed { index: usize, message: String },
    #[error("cannot compute statistics over zero samples")]
    NoSamples,
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// One dialogue turn: who spoke and what they said.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: String,
    pub text: String,
}

impl Utterance {
    pub fn new(speaker: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            speaker: speaker.into(),
            text: text.into(),
        }
    }

    /// Speakers must be non-empty and free of line breaks and colons, so that
    /// a serialized turn can always be split back into its two fields.
    pub fn check(&self) -> std::result::Result<(), String> {
        if self.speaker.trim().is_empty() {
            return Err("empty speaker".into());
        }
        if self.speaker.contains(['\n', '\r', ':']) {
            return Err(format!("invalid speaker {:?}", self.speaker));
        }
        Ok(())
    }

    /// `speaker: text`
    pub fn render(&self) -> String {
        format!("{}: {}", self.speaker, self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub turns: Vec<Utterance>,
}

impl Dialogue {
    pub fn new(id: impl Into<String>, turns: Vec<Utterance>) -> Self {
        Self { id: id.into(), turns }
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn check(&self) -> std::result::Result<(), String> {
        if self.turns.is_empty() {
            return Err("dialogue has no turns".into());
        }
        self.turns.iter().try_for_each(Utterance::check)
    }

    /// Sub-dialogue made of the given turn indices, kept in dialogue order.
    pub fn select(&self, indices: &[usize]) -> Dialogue {
        let mut idx = indices.to_vec();
        idx.sort_unstable();
        idx.dedup();
        Dialogue {
            id: self.id.clone(),
            turns: idx.into_iter().map(|i| self.turns[i].clone()).collect(),
        }
    }
}

/// A dialogue with its reference summaries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub dialogue: Dialogue,
    pub references: Vec<String>,
}

impl Sample {
    pub fn id(&self) -> &str {
        &self.dialogue.id
    }

    /// The first reference; every sample has at least one.
    pub fn summary(&self) -> &str {
        &self.references[0]
    }
}

/// Aggregate length statistics of a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_samples: usize,
    /// Mean input (serialized dialogue) word count.
    pub iw: f64,
    /// Mean output (reference) word count.
    pub ow: f64,
    /// Compression ratio `ow / iw`.
    pub cr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    SamsumJson,
    DialsummJsonl,
    Canonical,
}

impl std::str::FromStr for SourceFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "samsum" | "samsum_json" => Ok(Self::SamsumJson),
            "dialsumm" | "dialsumm_jsonl" => Ok(Self::DialsummJsonl),
            "canonical" => Ok(Self::Canonical),
            other => Err(format!("unknown corpus format `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceMode {
    /// Only the first reference of each sample.
    First,
    /// Average over every reference of a sample.
    All,
}

/// Whitespace word count.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Renders a dialogue as `speaker: text` lines joined by single newlines.
pub fn serialize_dialogue(dialogue: &Dialogue) -> String {
    let mut out = String::new();
    for (i, turn) in dialogue.turns.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&turn.speaker);
        out.push_str(": ");
        out.push_str(&turn.text);
    }
    out
}

/// Parses `Speaker: text` lines (either `\n` or `\r\n` separated).
///
/// Lines without a speaker prefix continue the previous turn.
pub fn parse_turns(raw: &str) -> std::result::Result<Vec<Utterance>, String> {
    let mut turns: Vec<Utterance> = Vec::new();
    for line in raw.lines() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        match line.split_once(':') {
            Some((speaker, text)) if !speaker.trim().is_empty() => {
                turns.push(Utterance::new(speaker.trim(), text.trim()));
            }
            _ => match turns.last_mut() {
                Some(prev) => {
                    if !prev.text.is_empty() {
                        prev.text.push(' ');
                    }
                    prev.text.push_str(line.trim());
                }
                None => return Err(format!("line without speaker: {line:?}")),
            },
        }
    }
    if turns.is_empty() {
        return Err("dialogue has no turns".into());
    }
    Ok(turns)
}

pub fn load_split(path: impl AsRef<Path>, format: SourceFormat) -> Result<Vec<Sample>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let samples = match format {
        SourceFormat::SamsumJson => parse_samsum(&raw)?,
        SourceFormat::DialsummJsonl => parse_jsonl(&raw, dialsumm_record)?,
        SourceFormat::Canonical => parse_jsonl(&raw, canonical_record)?,
    };
    if samples.is_empty() {
        return Err(CorpusError::EmptyFile(path.to_path_buf()));
    }
    Ok(samples)
}

/// Parses a SAMSum-style JSON array.
pub fn parse_samsum(raw: &str) -> Result<Vec<Sample>> {
    if raw.trim().is_empty() {
        return Ok(Vec::new());
    }
    let records: Vec<Value> = serde_json::from_str(raw).map_err(|e| CorpusError::Malformed {
        index: 0,
        message: format!("not a JSON array of records: {e}"),
    })?;
    records
        .iter()
        .enumerate()
        .map(|(index, rec)| samsum_record(index, rec))
        .collect()
}

fn parse_jsonl(raw: &str, build: fn(usize, &Value) -> Result<Sample>) -> Result<Vec<Sample>> {
    raw.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(index, line)| {
            let value: Value = serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
                index,
                message: e.to_string(),
            })?;
            build(index, &value)
        })
        .collect()
}

fn str_field<'a>(index: usize, rec: &'a Value, field: &'static str) -> Result<&'a str> {
    rec.get(field)
        .and_then(|v| match v {
            Value::String(s) => Some(s.as_str()),
            _ => None,
        })
        .ok_or(CorpusError::MissingField { index, field })
}

fn id_field(index: usize, rec: &Value, field: &'static str) -> Result<String> {
    match rec.get(field) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        _ => Err(CorpusError::MissingField { index, field }),
    }
}

fn finish(index: usize, id: String, raw_dialogue: &str, references: Vec<String>) -> Result<Sample> {
    let turns = parse_turns(raw_dialogue).map_err(|message| CorpusError::Malformed { index, message })?;
    build_sample(index, Dialogue::new(id, turns), references)
}

fn build_sample(index: usize, dialogue: Dialogue, references: Vec<String>) -> Result<Sample> {
    dialogue
        .check()
        .map_err(|message| CorpusError::Malformed { index, message })?;
    if references.is_empty() || references.iter().any(|r| r.trim().is_empty()) {
        return Err(CorpusError::EmptyReference { index });
    }
    Ok(Sample { dialogue, references })
}

fn samsum_record(index: usize, rec: &Value) -> Result<Sample> {
    let id = id_field(index, rec, "id")?;
    let dialogue = str_field(index, rec, "dialogue")?;
    let summary = str_field(index, rec, "summary")?;
    finish(index, id, dialogue, vec![summary.to_string()])
}

fn dialsumm_record(index: usize, rec: &Value) -> Result<Sample> {
    let id = id_field(index, rec, "fname")?;
    let dialogue = str_field(index, rec, "dialogue")?;
    let mut references = Vec::new();
    for key in ["summary", "summary1", "summary2", "summary3"] {
        if let Some(Value::String(s)) = rec.get(key) {
            references.push(s.clone());
        }
    }
    if references.is_empty() {
        return Err(CorpusError::MissingField {
            index,
            field: "summary",
        });
    }
    finish(index, id, dialogue, references)
}

#[derive(Serialize, Deserialize)]
struct CanonicalRecord {
    id: String,
    turns: Vec<Utterance>,
    references: Vec<String>,
}

fn canonical_record(index: usize, rec: &Value) -> Result<Sample> {
    let rec: CanonicalRecord = serde_json::from_value(rec.clone()).map_err(|e| CorpusError::Malformed {
        index,
        message: e.to_string(),
    })?;
    build_sample(index, Dialogue::new(rec.id, rec.turns), rec.references)
}

/// Writes samples as canonical line-delimited JSON records.
pub fn write_canonical<W: Write>(samples: &[Sample], mut out: W) -> io::Result<()> {
    for s in samples {
        let rec = CanonicalRecord {
            id: s.dialogue.id.clone(),
            turns: s.dialogue.turns.clone(),
            references: s.references.clone(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Reads canonical records from any buffered reader.
pub fn read_canonical<R: BufRead>(input: R) -> Result<Vec<Sample>> {
    let mut raw = String::new();
    for line in input.lines() {
        let line = line.map_err(|source| CorpusError::Io {
            path: PathBuf::from("<reader>"),
            source,
        })?;
        raw.push_str(&line);
        raw.push('\n');
    }
    parse_jsonl(&raw, canonical_record)
}

pub fn compute_stats(samples: &[Sample], mode: ReferenceMode) -> Result<CorpusStats> {
    if samples.is_empty() {
        return Err(CorpusError::NoSamples);
    }
    let n = samples.len() as f64;
    let iw = samples
        .iter()
        .map(|s| word_count(&serialize_dialogue(&s.dialogue)) as f64)
        .sum::<f64>()
        / n;
    let ow = samples
        .iter()
        .map(|s| match mode {
            ReferenceMode::First => word_count(s.summary()) as f64,
            ReferenceMode::All => {
                s.references.iter().map(|r| word_count(r) as f64).sum::<f64>() / s.references.len() as f64
            }
        })
        .sum::<f64>()
        / n;
    Ok(CorpusStats {
        n_samples: samples.len(),
        iw,
        ow,
        cr: ow / iw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dlg(turns: &[(&str, &str)]) -> Dialogue {
        Dialogue::new("d", turns.iter().map(|(s, t)| Utterance::new(*s, *t)).collect())
    }

    #[test]
    fn minimal_samsum_record() {
        let raw = r#"[{"id":"x","dialogue":"A: hi\r\nB: yo","summary":"A greets B."}]"#;
        let samples = parse_samsum(raw).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(
            samples[0].dialogue.turns,
            vec![Utterance::new("A", "hi"), Utterance::new("B", "yo")]
        );
        assert_eq!(samples[0].references, vec!["A greets B.".to_string()]);
    }

    #[test]
    fn empty_summary_is_rejected() {
        let raw = r#"[{"id":"x","dialogue":"A: hi","summary":""}]"#;
        let err = parse_samsum(raw).unwrap_err();
        assert_eq!(err.to_string(), "empty reference at index 0");
    }

    #[test]
    fn missing_field_names_index_and_field() {
        let raw = r#"[{"id":"x","dialogue":"A: hi","summary":"ok"},{"id":"y","summary":"ok"}]"#;
        let err = parse_samsum(raw).unwrap_err();
        assert_eq!(err.to_string(), "record 1: missing field `dialogue`");
    }

    #[test]
    fn empty_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.json");
        fs::write(&p, "").unwrap();
        assert!(matches!(
            load_split(&p, SourceFormat::SamsumJson),
            Err(CorpusError::EmptyFile(_))
        ));
        fs::write(&p, "[]").unwrap();
        assert!(matches!(
            load_split(&p, SourceFormat::SamsumJson),
            Err(CorpusError::EmptyFile(_))
        ));
    }

    #[test]
    fn dialsumm_test_records_keep_all_references() {
        let raw = concat!(
            r##"{"fname":"test_0","dialogue":"#Person1#: Hello.\n#Person2#: Hi.","summary1":"a b c","summary2":"d e","summary3":"f"}"##,
            "\n",
            r##"{"fname":"test_1","dialogue":"#Person1#: Bye.","summary":"x y"}"##,
            "\n"
        );
        let samples = parse_jsonl(raw, dialsumm_record).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[0].references.len(), 3);
        assert_eq!(samples[0].dialogue.turns[0].speaker, "#Person1#");
        assert_eq!(samples[1].references, vec!["x y".to_string()]);
    }

    #[test]
    fn continuation_lines_join_previous_turn() {
        let turns = parse_turns("A: first\r\nstill first\r\n\r\nB: second").unwrap();
        assert_eq!(turns.len(), 2);
        assert_eq!(turns[0].text, "first still first");
        assert!(parse_turns("no speaker here").is_err());
    }

    #[test]
    fn serialize_examples() {
        assert_eq!(serialize_dialogue(&dlg(&[("A", "hi")])), "A: hi");
        assert_eq!(serialize_dialogue(&dlg(&[("A", "hi"), ("B", "yo")])), "A: hi\nB: yo");
    }

    #[test]
    fn stats_single_sample() {
        // "A: one two three four five six seven eight" is 10 words with the prefix
        let s = Sample {
            dialogue: dlg(&[("A", "b c d e f g h i j")]),
            references: vec!["one two three four five".into()],
        };
        let st = compute_stats(&[s], ReferenceMode::First).unwrap();
        assert_eq!(st.iw, 10.0);
        assert_eq!(st.ow, 5.0);
        assert_eq!(st.cr, 0.5);
        assert!(matches!(
            compute_stats(&[], ReferenceMode::All),
            Err(CorpusError::NoSamples)
        ));
    }

    #[test]
    fn stats_all_references_mode() {
        let s = Sample {
            dialogue: dlg(&[("A", "x")]),
            references: vec!["a b".into(), "a b c d".into()],
        };
        assert_eq!(
            compute_stats(std::slice::from_ref(&s), ReferenceMode::First)
                .unwrap()
                .ow,
            2.0
        );
        assert_eq!(compute_stats(&[s], ReferenceMode::All).unwrap().ow, 3.0);
    }

    #[test]
    fn canonical_round_trip() {
        let samples = vec![Sample {
            dialogue: dlg(&[("A", "hi \"there\""), ("B", "")]),
            references: vec!["s1".into(), "s2".into()],
        }];
        let mut buf = Vec::new();
        write_canonical(&samples, &mut buf).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 1);
        assert_eq!(read_canonical(&buf[..]).unwrap(), samples);
    }

    fn turn_strategy() -> impl Strategy<Value = Utterance> {
        ("[A-Za-z#][A-Za-z0-9# ]{0,6}", "[^\n\r]{0,12}").prop_map(|(s, t)| Utterance::new(s, t))
    }

    proptest! {
        #[test]
        fn serialization_is_injective(
            a in prop::collection::vec(turn_strategy(), 1..5),
            b in prop::collection::vec(turn_strategy(), 1..5),
        ) {
            let da = Dialogue::new("a", a);
            let db = Dialogue::new("b", b);
            if da.turns != db.turns {
                prop_assert_ne!(serialize_dialogue(&da), serialize_dialogue(&db));
            }
        }

        #[test]
        fn stats_are_permutation_invariant(
            lens in prop::collection::vec((1usize..30, 1usize..10), 1..8),
            rot in 0usize..8,
        ) {
            let samples: Vec<Sample> = lens.iter().enumerate().map(|(i, &(iw, ow))| Sample {
                dialogue: Dialogue::new(i.to_string(), vec![Utterance::new("S", vec!["w"; iw].join(" "))]),
                references: vec![vec!["r"; ow].join(" ")],
            }).collect();
            let mut shuffled = samples.clone();
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            let a = compute_stats(&samples, ReferenceMode::First).unwrap();
            let b = compute_stats(&shuffled, ReferenceMode::First).unwrap();
            prop_assert!((a.iw - b.iw).abs() < 1e-9);
            prop_assert!((a.ow - b.ow).abs() < 1e-9);
            prop_assert_eq!(a.cr, a.ow / a.iw);
        }
    }
}
