//! Child-process annotator backend.
//!
//! Each worker is one child process. A request is a single JSON line on the
//! child's stdin; the response is a single JSON line on its stdout. A worker
//! carries at most one request at a time; responses are matched by `id` and
//! anything else read off the channel is parked until asked for.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use crossbeam_channel::{Receiver, Sender};
use serde::{Deserialize, Serialize};

use super::{AnnotateError, Annotation, Annotator, CorefChain, Mention, Pos, Result, SentenceAnnotation, Word};

/// Environment variable holding the annotator command line.
pub const ANNOTATOR_CMD_ENV: &str = "DIALSUM_ANNOTATOR_CMD";

const TASKS: [&str; 4] = ["sentencize", "pos", "depparse", "coref"];

#[derive(Serialize)]
struct WireRequest<'a> {
    id: &'a str,
    text: &'a str,
    tasks: [&'static str; 4],
}

#[derive(Serialize, Deserialize)]
pub(crate) struct WireWord {
    text: String,
    pos: String,
    is_root: bool,
    start: usize,
    end: usize,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct WireSentence {
    text: String,
    words: Vec<WireWord>,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct WireChain {
    mentions: Vec<[usize; 3]>,
    representative: usize,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct WireResponse {
    id: String,
    sentences: Vec<WireSentence>,
    chains: Vec<WireChain>,
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    parked: HashMap<String, String>,
}

impl Drop for Worker {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct ExternalAnnotator {
    workers: Vec<Mutex<Worker>>,
    idle_tx: Sender<usize>,
    idle_rx: Receiver<usize>,
    next_id: AtomicU64,
}

impl ExternalAnnotator {
    /// Spawns `workers` copies of `command` (program followed by arguments).
    pub fn spawn(command: &[String], workers: usize) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| AnnotateError::Unreachable("empty annotator command".into()))?;
        let (idle_tx, idle_rx) = crossbeam_channel::unbounded();
        let mut pool = Vec::new();
        for i in 0..workers.max(1) {
            let mut child = Command::new(program)
                .args(args)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()
                .map_err(|e| AnnotateError::Unreachable(format!("cannot start {program}: {e}")))?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
            pool.push(Mutex::new(Worker {
                child,
                stdin,
                stdout,
                parked: HashMap::new(),
            }));
            idle_tx.send(i).expect("receiver alive");
        }
        Ok(Self {
            workers: pool,
            idle_tx,
            idle_rx,
            next_id: AtomicU64::new(0),
        })
    }

    /// Spawns workers from the command line in `DIALSUM_ANNOTATOR_CMD`.
    pub fn from_env(workers: usize) -> Result<Self> {
        let cmd = std::env::var(ANNOTATOR_CMD_ENV)
            .map_err(|_| AnnotateError::Unreachable(format!("{ANNOTATOR_CMD_ENV} is not set")))?;
        let parts: Vec<String> = cmd.split_whitespace().map(String::from).collect();
        Self::spawn(&parts, workers)
    }

    pub fn workers(&self) -> usize {
        self.workers.len()
    }

    fn exchange(&self, worker: &mut Worker, id: &str, text: &str) -> Result<String> {
        if let Some(raw) = worker.parked.remove(id) {
            return Ok(raw);
        }
        let mut line = serde_json::to_string(&WireRequest { id, text, tasks: TASKS }).expect("request serializes");
        line.push('\n');
        worker
            .stdin
            .write_all(line.as_bytes())
            .and_then(|_| worker.stdin.flush())
            .map_err(|e| AnnotateError::Unreachable(format!("write failed: {e}")))?;
        loop {
            let mut raw = String::new();
            let n = worker
                .stdout
                .read_line(&mut raw)
                .map_err(|e| AnnotateError::Unreachable(format!("read failed: {e}")))?;
            if n == 0 {
                return Err(AnnotateError::Unreachable("annotator closed its output".into()));
            }
            let raw = raw.trim_end().to_string();
            let value: serde_json::Value = serde_json::from_str(&raw).map_err(|e| AnnotateError::Protocol {
                reason: e.to_string(),
                raw: raw.clone(),
            })?;
            match value.get("id").and_then(|v| v.as_str()) {
                Some(got) if got == id => return Ok(raw),
                Some(other) => {
                    worker.parked.insert(other.to_string(), raw);
                }
                None => {
                    return Err(AnnotateError::Protocol {
                        reason: "response without id".into(),
                        raw,
                    })
                }
            }
        }
    }
}

impl Annotator for ExternalAnnotator {
    fn annotate(&self, text: &str) -> Result<Annotation> {
        let id = format!("req-{}", self.next_id.fetch_add(1, Ordering::Relaxed));
        let slot = self.idle_rx.recv().expect("pool sender alive");
        let raw = {
            let mut worker = self.workers[slot].lock().unwrap_or_else(|p| p.into_inner());
            self.exchange(&mut worker, &id, text)
        };
        self.idle_tx.send(slot).expect("pool receiver alive");
        let raw = raw?;
        let resp: WireResponse = serde_json::from_str(&raw).map_err(|e| AnnotateError::Protocol {
            reason: e.to_string(),
            raw: raw.clone(),
        })?;
        let annotation = from_wire(text, resp).map_err(|reason| AnnotateError::Protocol {
            reason,
            raw: raw.clone(),
        })?;
        annotation.validate(text).map_err(|e| AnnotateError::Protocol {
            reason: e.to_string(),
            raw,
        })?;
        Ok(annotation)
    }
}

/// Byte offset of every char boundary, indexed by char position.
fn char_to_byte(text: &str) -> Vec<usize> {
    text.char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(text.len()))
        .collect()
}

fn from_wire(text: &str, resp: WireResponse) -> std::result::Result<Annotation, String> {
    let mut sentences = Vec::with_capacity(resp.sentences.len());
    let mut cursor = 0;
    for s in resp.sentences {
        let found = text[cursor..]
            .find(&s.text)
            .ok_or_else(|| format!("sentence {:?} not found in text", s.text))?;
        let offset = cursor + found;
        cursor = offset + s.text.len();
        let map = char_to_byte(&s.text);
        let byte = |c: usize| map.get(c).copied().ok_or_else(|| format!("offset {c} out of range"));
        let words = s
            .words
            .into_iter()
            .map(|w| {
                Ok(Word {
                    start: byte(w.start)?,
                    end: byte(w.end)?,
                    text: w.text,
                    pos: Pos::from_tag(&w.pos),
                    is_root: w.is_root,
                })
            })
            .collect::<std::result::Result<Vec<_>, String>>()?;
        sentences.push(SentenceAnnotation {
            text: s.text,
            offset,
            words,
        });
    }
    let mut chains = Vec::with_capacity(resp.chains.len());
    for c in resp.chains {
        let mut mentions = Vec::with_capacity(c.mentions.len());
        for [si, start, end] in c.mentions {
            let sentence = sentences
                .get(si)
                .ok_or_else(|| format!("mention refers to missing sentence {si}"))?;
            let map = char_to_byte(&sentence.text);
            let get = |c: usize| map.get(c).copied().ok_or_else(|| format!("offset {c} out of range"));
            mentions.push(Mention {
                sentence: si,
                start: get(start)?,
                end: get(end)?,
            });
        }
        chains.push(CorefChain {
            mentions,
            representative: c.representative,
        });
    }
    Ok(Annotation { sentences, chains })
}

/// Renders an annotation as a protocol response line (character offsets).
pub fn wire_response(id: &str, annotation: &Annotation) -> String {
    let to_char = |text: &str, byte: usize| text[..byte].chars().count();
    let resp = WireResponse {
        id: id.to_string(),
        sentences: annotation
            .sentences
            .iter()
            .map(|s| WireSentence {
                text: s.text.clone(),
                words: s
                    .words
                    .iter()
                    .map(|w| WireWord {
                        text: w.text.clone(),
                        pos: w.pos.as_tag().to_string(),
                        is_root: w.is_root,
                        start: to_char(&s.text, w.start),
                        end: to_char(&s.text, w.end),
                    })
                    .collect(),
            })
            .collect(),
        chains: annotation
            .chains
            .iter()
            .map(|c| WireChain {
                mentions: c
                    .mentions
                    .iter()
                    .map(|m| {
                        let t = &annotation.sentences[m.sentence].text;
                        [m.sentence, to_char(t, m.start), to_char(t, m.end)]
                    })
                    .collect(),
                representative: c.representative,
            })
            .collect(),
    };
    serde_json::to_string(&resp).expect("response serializes")
}
