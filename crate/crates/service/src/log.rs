//! Append-only event log.
//!
//! The first line names the log version and the formats it embeds. Every
//! other line is `<seq>\t<record>\t<json>`, where the record is `snapshot`
//! (a full engine state) or `command` (one successfully applied command).
//! Replay starts at the last snapshot and re-applies the commands after it.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use kgcrowd::engine::{Command, Engine, EngineError};
use kgcrowd::graph::FORMAT_VERSION;

pub const LOG_VERSION: &str = "kgcf-events/1";
const EMBEDDED: [&str; 3] = [FORMAT_VERSION, "kgcf-crowd/1", "kgcf-consensus/1"];

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("i/o error on event log: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported event log header `{0}`")]
    Version(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("event log has no snapshot")]
    NoSnapshot,
    #[error("replay diverged at seq {seq}: {source}")]
    Diverged { seq: u64, source: EngineError },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Snapshot(Box<Engine>),
    Command(Command),
}

fn header() -> String {
    std::iter::once(LOG_VERSION).chain(EMBEDDED).collect::<Vec<_>>().join("\t")
}

fn encode(seq: u64, record: &Record) -> String {
    let (kind, json) = match record {
        Record::Snapshot(engine) => ("snapshot", serde_json::to_string(engine)),
        Record::Command(cmd) => ("command", serde_json::to_string(cmd)),
    };
    format!("{seq}\t{kind}\t{}\n", json.expect("engine state serializes"))
}

/// Parses a whole log into its records, in order.
pub fn parse(text: &str) -> Result<Vec<(u64, Record)>, LogError> {
    let mut lines = text.lines();
    let first = lines.next().unwrap_or("");
    if first.split('\t').next() != Some(LOG_VERSION) {
        return Err(LogError::Version(first.to_string()));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.is_empty() {
            continue;
        }
        let err = |message: String| LogError::Parse { line: line_no, message };
        let mut parts = line.splitn(3, '\t');
        let (Some(seq), Some(kind), Some(json)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(err("expected three tab-separated fields".into()));
        };
        let seq: u64 = seq.parse().map_err(|_| err(format!("bad sequence number `{seq}`")))?;
        let record = match kind {
            "snapshot" => Record::Snapshot(Box::new(serde_json::from_str(json).map_err(|e| err(e.to_string()))?)),
            "command" => Record::Command(serde_json::from_str(json).map_err(|e| err(e.to_string()))?),
            other => return Err(err(format!("unknown record `{other}`"))),
        };
        out.push((seq, record));
    }
    Ok(out)
}

/// Rebuilds the engine from the last snapshot and the commands after it.
/// Returns the engine and the last sequence number seen.
pub fn replay(records: Vec<(u64, Record)>) -> Result<(Engine, u64), LogError> {
    let start = records.iter().rposition(|(_, r)| matches!(r, Record::Snapshot(_))).ok_or(LogError::NoSnapshot)?;
    let last_seq = records.last().map(|(s, _)| *s).unwrap_or(0);
    let mut iter = records.into_iter().skip(start);
    let Some((_, Record::Snapshot(engine))) = iter.next() else { unreachable!("position found above") };
    let mut engine = *engine;
    for (seq, record) in iter {
        if let Record::Command(cmd) = record {
            engine.apply(cmd).map_err(|source| LogError::Diverged { seq, source })?;
        }
    }
    Ok((engine, last_seq))
}

/// Open log file that records are appended to.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
    next_seq: u64,
}

impl EventLog {
    /// Creates a new log whose first record is a snapshot of `engine`.
    pub fn create(path: &Path, engine: &Engine) -> Result<Self, LogError> {
        let mut file = OpenOptions::new().write(true).create_new(true).open(path)?;
        file.write_all(format!("{}\n", header()).as_bytes())?;
        let mut log = EventLog { path: path.to_path_buf(), file, next_seq: 1 };
        log.append(&Record::Snapshot(Box::new(engine.clone())))?;
        Ok(log)
    }

    /// Opens an existing log and replays it.
    pub fn open(path: &Path) -> Result<(Self, Engine), LogError> {
        let text = std::fs::read_to_string(path)?;
        let (engine, last_seq) = replay(parse(&text)?)?;
        let file = OpenOptions::new().append(true).open(path)?;
        Ok((EventLog { path: path.to_path_buf(), file, next_seq: last_seq + 1 }, engine))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: &Record) -> Result<u64, LogError> {
        let seq = self.next_seq;
        self.file.write_all(encode(seq, record).as_bytes())?;
        self.file.flush()?;
        self.file.sync_data()?;
        self.next_seq += 1;
        Ok(seq)
    }
}
