//! Line-protocol annotator backed by the rule-based fallback.
//!
//! Reads one JSON request per line on stdin and answers on stdout. With
//! `--stale`, every answer is preceded by a response for an unknown id.

use std::io::{self, BufRead, Write};

use dialsum_core::annotate::{wire_response, Annotator, FallbackAnnotator};

fn main() -> io::Result<()> {
    let stale = std::env::args().any(|a| a == "--stale");
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    for line in stdin.lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let req: serde_json::Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                writeln!(out, "{{\"error\":{:?}}}", e.to_string())?;
                out.flush()?;
                continue;
            }
        };
        let id = req["id"].as_str().unwrap_or_default();
        let text = req["text"].as_str().unwrap_or_default();
        let annotation = FallbackAnnotator.annotate(text).expect("fallback never fails");
        if stale {
            writeln!(out, "{}", wire_response(&format!("stale-{id}"), &annotation))?;
        }
        writeln!(out, "{}", wire_response(id, &annotation))?;
        out.flush()?;
    }
    Ok(())
}
