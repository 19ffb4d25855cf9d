use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One atomic trace record: either a single commit touching a single file,
/// or a single message within a discussion thread.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub project_id: String,
    pub kind: EventKind,
    pub timestamp: DateTime<Utc>,
    pub author_raw: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thread_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message_ordinal: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    CommitFileTouch,
    ThreadMessage,
}

pub type EventLog = Vec<TraceEvent>;

/// An input line that failed validation, kept verbatim for the rejects report.
#[derive(Debug, Clone, Serialize)]
pub struct RejectedLine {
    /// 1-based line number in the input stream.
    pub line: u64,
    pub error: String,
    pub raw: String,
}

#[derive(Debug, Default)]
pub struct ParseOutcome {
    pub events: EventLog,
    pub rejects: Vec<RejectedLine>,
}

impl TraceEvent {
    /// Kind-specific field requirements; violations make the record invalid
    /// rather than partially usable.
    fn validate(&self) -> std::result::Result<(), String> {
        match self.kind {
            EventKind::CommitFileTouch => {
                if self.file_path.is_none() {
                    return Err("commit_file_touch requires file_path".into());
                }
                if self.thread_id.is_some() || self.message_ordinal.is_some() {
                    return Err("commit_file_touch must not carry thread fields".into());
                }
            }
            EventKind::ThreadMessage => {
                if self.thread_id.is_none() || self.message_ordinal.is_none() {
                    return Err("thread_message requires thread_id and message_ordinal".into());
                }
                if self.file_path.is_some() {
                    return Err("thread_message must not carry file_path".into());
                }
            }
        }
        Ok(())
    }
}

/// Parse line-delimited JSON records into a time-ordered event log.
///
/// Malformed lines (bad JSON, missing fields, kind/field mismatches,
/// duplicate message ordinals within a thread) are collected as rejects with
/// their line numbers; every input line lands in exactly one of the two
/// output lists. An unreadable stream is fatal.
pub fn parse_trace_events<R: BufRead>(input: R) -> Result<ParseOutcome> {
    let mut out = ParseOutcome::default();
    let mut seen_ordinals: BTreeSet<(String, String, u64)> = BTreeSet::new();

    for (idx, line) in input.lines().enumerate() {
        let line = line.map_err(Error::Stream)?;
        let lineno = idx as u64 + 1;
        if line.trim().is_empty() {
            out.rejects.push(RejectedLine {
                line: lineno,
                error: "empty line".into(),
                raw: line,
            });
            continue;
        }
        let event: TraceEvent = match serde_json::from_str(&line) {
            Ok(ev) => ev,
            Err(err) => {
                out.rejects.push(RejectedLine {
                    line: lineno,
                    error: err.to_string(),
                    raw: line,
                });
                continue;
            }
        };
        if let Err(msg) = event.validate() {
            out.rejects.push(RejectedLine {
                line: lineno,
                error: msg,
                raw: line,
            });
            continue;
        }
        if event.kind == EventKind::ThreadMessage {
            let key = (
                event.project_id.clone(),
                event.thread_id.clone().unwrap(),
                event.message_ordinal.unwrap(),
            );
            if !seen_ordinals.insert(key) {
                out.rejects.push(RejectedLine {
                    line: lineno,
                    error: "duplicate message_ordinal within thread".into(),
                    raw: line,
                });
                continue;
            }
        }
        out.events.push(event);
    }

    // Stable sort: equal timestamps keep input order.
    out.events.sort_by_key(|e| e.timestamp);
    Ok(out)
}

/// Write the rejects report: each rejected record re-emitted with `line` and
/// `error` fields added; lines that were not JSON objects are wrapped as-is.
pub fn write_rejects_report<W: Write>(rejects: &[RejectedLine], mut w: W) -> Result<()> {
    for r in rejects {
        let mut obj = match serde_json::from_str::<serde_json::Value>(&r.raw) {
            Ok(serde_json::Value::Object(m)) => m,
            _ => {
                let mut m = serde_json::Map::new();
                m.insert("raw".into(), serde_json::Value::String(r.raw.clone()));
                m
            }
        };
        obj.insert("line".into(), serde_json::Value::from(r.line));
        obj.insert("error".into(), serde_json::Value::String(r.error.clone()));
        serde_json::to_writer(&mut w, &serde_json::Value::Object(obj))?;
        writeln!(w).map_err(Error::Stream)?;
    }
    Ok(())
}

/// The set of file extensions considered source code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtensionList {
    extensions: BTreeSet<String>,
}

impl ExtensionList {
    pub fn new<I, S>(items: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut extensions = BTreeSet::new();
        for item in items {
            let ext = item.as_ref().trim().trim_start_matches('.').to_lowercase();
            if !ext.is_empty() {
                extensions.insert(ext);
            }
        }
        if extensions.is_empty() {
            return Err(Error::Config("extension list is empty".into()));
        }
        Ok(ExtensionList { extensions })
    }

    /// Load from a plain-text file: one extension per line, `#` starts a
    /// comment, blank lines ignored.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(
            text.lines()
                .map(|l| l.split('#').next().unwrap_or(""))
                .filter(|l| !l.trim().is_empty()),
        )
    }

    pub fn contains(&self, ext: &str) -> bool {
        self.extensions.contains(ext)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.extensions.iter().map(String::as_str)
    }
}

/// Extension of the final path segment: the substring after its last dot,
/// lowercased. Dotless names and dotfiles have no extension.
pub fn source_extension(path: &str) -> Option<String> {
    let segment = path.rsplit('/').next()?;
    let dot = segment.rfind('.')?;
    if dot == 0 || dot + 1 == segment.len() {
        return None;
    }
    Some(segment[dot + 1..].to_lowercase())
}

/// Drop commit events whose file is not source code; message events pass
/// through untouched.
pub fn filter_source_files(log: EventLog, ext: &ExtensionList) -> EventLog {
    log.into_iter()
        .filter(|e| match e.kind {
            EventKind::ThreadMessage => true,
            EventKind::CommitFileTouch => e
                .file_path
                .as_deref()
                .and_then(source_extension)
                .map(|x| ext.contains(&x))
                .unwrap_or(false),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn commit_line(ts: &str, author: &str, path: &str) -> String {
        format!(
            r#"{{"project_id":"p","kind":"commit_file_touch","timestamp":"{ts}","author_raw":"{author}","file_path":"{path}"}}"#
        )
    }

    fn message_line(ts: &str, author: &str, thread: &str, ordinal: u64) -> String {
        format!(
            r#"{{"project_id":"p","kind":"thread_message","timestamp":"{ts}","author_raw":"{author}","thread_id":"{thread}","message_ordinal":{ordinal}}}"#
        )
    }

    #[test]
    fn empty_stream_yields_empty_log() {
        let out = parse_trace_events(std::io::Cursor::new("")).unwrap();
        assert!(out.events.is_empty());
        assert!(out.rejects.is_empty());
    }

    #[test]
    fn equal_timestamps_preserve_input_order() {
        let input = [
            commit_line("2020-01-02T00:00:00Z", "b", "x.c"),
            commit_line("2020-01-01T00:00:00Z", "a", "y.c"),
            commit_line("2020-01-02T00:00:00Z", "c", "z.c"),
        ]
        .join("\n");
        let out = parse_trace_events(std::io::Cursor::new(input)).unwrap();
        let authors: Vec<_> = out.events.iter().map(|e| e.author_raw.as_str()).collect();
        assert_eq!(authors, ["a", "b", "c"]);
    }

    #[test]
    fn missing_author_is_rejected_with_line_number() {
        let input = format!(
            "{}\n{}",
            commit_line("2020-01-01T00:00:00Z", "a", "x.c"),
            r#"{"project_id":"p","kind":"commit_file_touch","timestamp":"2020-01-01T00:00:00Z","file_path":"y.c"}"#
        );
        let out = parse_trace_events(std::io::Cursor::new(input)).unwrap();
        assert_eq!(out.events.len(), 1);
        assert_eq!(out.rejects.len(), 1);
        assert_eq!(out.rejects[0].line, 2);
        assert!(out.rejects[0].error.contains("author_raw"));
    }

    #[test]
    fn kind_field_mismatches_are_rejected() {
        let cases = [
            // commit without a file
            r#"{"project_id":"p","kind":"commit_file_touch","timestamp":"2020-01-01T00:00:00Z","author_raw":"a"}"#,
            // commit carrying thread fields
            r#"{"project_id":"p","kind":"commit_file_touch","timestamp":"2020-01-01T00:00:00Z","author_raw":"a","file_path":"x.c","thread_id":"t"}"#,
            // message without an ordinal
            r#"{"project_id":"p","kind":"thread_message","timestamp":"2020-01-01T00:00:00Z","author_raw":"a","thread_id":"t"}"#,
        ];
        for case in cases {
            let out = parse_trace_events(std::io::Cursor::new(case)).unwrap();
            assert!(out.events.is_empty(), "accepted: {case}");
            assert_eq!(out.rejects.len(), 1);
        }
    }

    #[test]
    fn duplicate_ordinal_within_thread_is_rejected() {
        let input = [
            message_line("2020-01-01T00:00:00Z", "a", "t1", 0),
            message_line("2020-01-01T01:00:00Z", "b", "t1", 0),
            message_line("2020-01-01T02:00:00Z", "b", "t2", 0),
        ]
        .join("\n");
        let out = parse_trace_events(std::io::Cursor::new(input)).unwrap();
        assert_eq!(out.events.len(), 2);
        assert_eq!(out.rejects.len(), 1);
        assert_eq!(out.rejects[0].line, 2);
    }

    #[test]
    fn every_line_is_event_or_reject() {
        let input = [
            commit_line("2020-01-01T00:00:00Z", "a", "x.c"),
            String::new(),
            "not json at all".to_string(),
            message_line("2020-01-01T00:00:00Z", "b", "t", 0),
        ]
        .join("\n");
        let out = parse_trace_events(std::io::Cursor::new(input)).unwrap();
        assert_eq!(out.events.len() + out.rejects.len(), 4);
    }

    #[test]
    fn rejects_report_carries_line_and_error() {
        let out = parse_trace_events(std::io::Cursor::new(
            r#"{"project_id":"p","kind":"thread_message","timestamp":"2020-01-01T00:00:00Z","author_raw":"a"}"#,
        ))
        .unwrap();
        let mut buf = Vec::new();
        write_rejects_report(&out.rejects, &mut buf).unwrap();
        let report: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(report["line"], 1);
        assert_eq!(report["project_id"], "p");
        assert!(report["error"].as_str().unwrap().contains("thread_message"));
    }

    #[test]
    fn extension_extraction_handles_edge_shapes() {
        assert_eq!(source_extension("src/main.c"), Some("c".into()));
        assert_eq!(source_extension("a/b/Name.TAR.GZ"), Some("gz".into()));
        assert_eq!(source_extension("Makefile"), None);
        assert_eq!(source_extension(".gitignore"), None);
        assert_eq!(source_extension("weird."), None);
        assert_eq!(source_extension("dir.with.dots/plain"), None);
    }

    #[test]
    fn filter_keeps_source_commits_and_all_messages() {
        let ext = ExtensionList::new(["c", "h"]).unwrap();
        let input = [
            commit_line("2020-01-01T00:00:00Z", "a", "src/main.c"),
            commit_line("2020-01-01T00:00:01Z", "a", "README.md"),
            message_line("2020-01-01T00:00:02Z", "b", "t", 0),
        ]
        .join("\n");
        let log = parse_trace_events(std::io::Cursor::new(input)).unwrap().events;
        let filtered = filter_source_files(log, &ext);
        assert_eq!(filtered.len(), 2);
        assert!(filtered
            .iter()
            .all(|e| e.file_path.as_deref() != Some("README.md")));

        // Idempotent: a second pass removes nothing further.
        let again = filter_source_files(filtered.clone(), &ext);
        assert_eq!(again, filtered);
    }

    #[test]
    fn extension_list_normalizes_and_rejects_empty() {
        let ext = ExtensionList::new([".C", "h ", ""]).unwrap();
        assert!(ext.contains("c"));
        assert!(ext.contains("h"));
        assert!(ExtensionList::new(Vec::<String>::new()).is_err());
    }
}
