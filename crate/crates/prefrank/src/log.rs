//! Append-only JSONL event log.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use prefrank_core::LoggedEvent;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("event log {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("event log line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
}

/// Writer that syncs after every batch so acknowledged events survive a crash.
#[derive(Debug)]
pub struct LogWriter {
    path: PathBuf,
    file: File,
}

impl LogWriter {
    pub fn open(path: &Path) -> Result<Self, LogError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| LogError::Io {
                path: path.to_owned(),
                source,
            })?;
        Ok(LogWriter {
            path: path.to_owned(),
            file,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, events: &[LoggedEvent]) -> Result<(), LogError> {
        if events.is_empty() {
            return Ok(());
        }
        let mut buf = Vec::new();
        for e in events {
            serde_json::to_writer(&mut buf, e).expect("events serialize");
            buf.push(b'\n');
        }
        let io = |source| LogError::Io {
            path: self.path.clone(),
            source,
        };
        self.file.write_all(&buf).map_err(io)?;
        self.file.sync_data().map_err(io)
    }
}

pub fn encode(events: &[LoggedEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("events serialize"));
        out.push('\n');
    }
    out
}

/// Parses a log, requiring `seq` to run 1, 2, 3, ... without gaps.
pub fn parse(reader: impl BufRead) -> Result<Vec<LoggedEvent>, LogError> {
    let mut out: Vec<LoggedEvent> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| LogError::Io {
            path: PathBuf::new(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let event: LoggedEvent = serde_json::from_str(&line).map_err(|e| LogError::Corrupt {
            line: lineno,
            reason: format!(
                "seq {}: {e}",
                seq_hint(&line).unwrap_or(out.len() as u64 + 1)
            ),
        })?;
        let want = out.len() as u64 + 1;
        if event.seq != want {
            return Err(LogError::Corrupt {
                line: lineno,
                reason: format!("seq {} where {want} was expected", event.seq),
            });
        }
        out.push(event);
    }
    Ok(out)
}

/// Reads `"seq":N` even from a line that is not valid JSON.
fn seq_hint(line: &str) -> Option<u64> {
    let rest = &line[line.find("\"seq\"")? + 5..];
    let rest = rest.trim_start().strip_prefix(':')?.trim_start();
    let end = rest
        .find(|c: char| !c.is_ascii_digit())
        .unwrap_or(rest.len());
    rest[..end].parse().ok()
}

pub fn read(path: &Path) -> Result<Vec<LoggedEvent>, LogError> {
    let file = File::open(path).map_err(|source| LogError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse(BufReader::new(file)).map_err(|e| match e {
        LogError::Io { source, .. } => LogError::Io {
            path: path.to_owned(),
            source,
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use prefrank_core::{Event, RequestId};

    fn ev(seq: u64) -> LoggedEvent {
        LoggedEvent {
            seq,
            timestamp: 10 * seq,
            event: Event::Expire {
                request_id: RequestId(seq),
            },
        }
    }

    #[test]
    fn append_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let mut w = LogWriter::open(&path).unwrap();
        w.append(&[ev(1), ev(2)]).unwrap();
        drop(w);
        let mut w = LogWriter::open(&path).unwrap();
        w.append(&[ev(3)]).unwrap();
        assert_eq!(read(&path).unwrap(), vec![ev(1), ev(2), ev(3)]);
    }

    #[test]
    fn corrupt_line_names_its_seq() {
        let text = format!(
            "{}{}\n",
            encode(&[ev(1)]),
            r#"{"seq":2,"timestamp":5,"kind":"Bogus"}"#
        );
        let err = parse(text.as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2") && msg.contains("seq 2"), "{msg}");
        let torn = format!("{}{}", encode(&[ev(1)]), r#"{"seq": 7,"timest"#);
        assert!(parse(torn.as_bytes())
            .unwrap_err()
            .to_string()
            .contains("seq 7"));
    }

    #[test]
    fn gaps_are_rejected() {
        let text = encode(&[ev(1), ev(3)]);
        assert!(matches!(
            parse(text.as_bytes()),
            Err(LogError::Corrupt { line: 2, .. })
        ));
    }
}
