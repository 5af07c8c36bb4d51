//! Line-delimited trace format.
//!
//! A trace file starts with a header line carrying the format version, followed by one JSON
//! object per line. Event lines use the event field names verbatim with a `kind` tag;
//! serialization records and static-constant observations share the same file.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{Event, LogicalTime, SerializationRecord, StaticConstant};

pub const TRACE_FORMAT: &str = "plaincode-trace";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
#[error("cannot encode trace entry: {0}")]
pub struct EncodeError(String);

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unsupported trace header: {message}")]
    Header { line: usize, message: String },
    #[error("I/O error while reading trace: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub version: u32,
}

impl Header {
    pub fn new(format: &str) -> Self {
        Header { format: format.to_string(), version: FORMAT_VERSION }
    }
}

/// Any line of a trace file after the header.
#[derive(Debug, Clone, PartialEq)]
pub enum LogEntry {
    Event(Event),
    Record(SerializationRecord),
    StaticConstant { time: LogicalTime, constant: StaticConstant },
}

impl LogEntry {
    pub fn time(&self) -> LogicalTime {
        match self {
            LogEntry::Event(e) => e.time(),
            LogEntry::Record(r) => r.time,
            LogEntry::StaticConstant { time, .. } => *time,
        }
    }
}

pub fn encode_header(format: &str) -> String {
    serde_json::to_string(&Header::new(format)).expect("header always encodes")
}

/// Encodes one event as a single line (without the trailing newline).
pub fn encode_event(event: &Event) -> Result<String, EncodeError> {
    serde_json::to_string(event).map_err(|e| EncodeError(e.to_string()))
}

pub fn decode_event(line: &str) -> Result<Event, DecodeError> {
    serde_json::from_str(line).map_err(|e| DecodeError::Malformed { line: 0, message: e.to_string() })
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct TaggedRecord<'a> {
    kind: &'static str,
    #[serde(flatten)]
    record: &'a SerializationRecord,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct TaggedStatic {
    kind: String,
    time: LogicalTime,
    #[serde(flatten)]
    constant: StaticConstant,
}

const RECORD_KIND: &str = "SerializationRecord";
const STATIC_KIND: &str = "StaticConstant";

pub fn encode_entry(entry: &LogEntry) -> Result<String, EncodeError> {
    let res = match entry {
        LogEntry::Event(e) => return encode_event(e),
        LogEntry::Record(record) => serde_json::to_string(&TaggedRecord { kind: RECORD_KIND, record }),
        LogEntry::StaticConstant { time, constant } => serde_json::to_string(&TaggedStatic {
            kind: STATIC_KIND.into(),
            time: *time,
            constant: constant.clone(),
        }),
    };
    res.map_err(|e| EncodeError(e.to_string()))
}

pub fn decode_entry(line: &str) -> Result<LogEntry, DecodeError> {
    let malformed = |e: serde_json::Error| DecodeError::Malformed { line: 0, message: e.to_string() };
    let mut value: Value = serde_json::from_str(line).map_err(malformed)?;
    let kind = value.get("kind").and_then(Value::as_str).unwrap_or_default().to_string();
    match kind.as_str() {
        RECORD_KIND => {
            value.as_object_mut().map(|o| o.remove("kind"));
            Ok(LogEntry::Record(serde_json::from_value(value).map_err(malformed)?))
        }
        STATIC_KIND => {
            let s: TaggedStatic = serde_json::from_value(value).map_err(malformed)?;
            Ok(LogEntry::StaticConstant { time: s.time, constant: s.constant })
        }
        _ => Ok(LogEntry::Event(serde_json::from_value(value).map_err(malformed)?)),
    }
}

/// A decoded trace with the source line of every entry.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceLog {
    pub entries: Vec<LogEntry>,
    pub lines: Vec<usize>,
}

impl TraceLog {
    pub fn events(&self) -> Vec<Event> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                LogEntry::Event(e) => Some(e.clone()),
                _ => None,
            })
            .collect()
    }

    /// Source line of each event in `events()` order.
    pub fn event_lines(&self) -> Vec<usize> {
        self.entries
            .iter()
            .zip(&self.lines)
            .filter(|(e, _)| matches!(e, LogEntry::Event(_)))
            .map(|(_, l)| *l)
            .collect()
    }

    pub fn records(&self) -> Vec<SerializationRecord> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                LogEntry::Record(r) => Some(r.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn static_constants(&self) -> Vec<StaticConstant> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                LogEntry::StaticConstant { constant, .. } => Some(constant.clone()),
                _ => None,
            })
            .collect()
    }
}

/// Checks a header line against the expected format name and version.
pub fn check_header(line: &str, format: &str, line_no: usize) -> Result<(), DecodeError> {
    let header: Header = serde_json::from_str(line)
        .map_err(|e| DecodeError::Header { line: line_no, message: e.to_string() })?;
    if header.format != format || header.version != FORMAT_VERSION {
        return Err(DecodeError::Header {
            line: line_no,
            message: format!("expected {format} v{FORMAT_VERSION}, found {} v{}", header.format, header.version),
        });
    }
    Ok(())
}

pub fn read_trace(reader: impl BufRead) -> Result<TraceLog, DecodeError> {
    let mut log = TraceLog::default();
    let mut saw_header = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            check_header(&line, TRACE_FORMAT, line_no)?;
            saw_header = true;
            continue;
        }
        let entry = decode_entry(&line).map_err(|e| match e {
            DecodeError::Malformed { message, .. } => DecodeError::Malformed { line: line_no, message },
            other => other,
        })?;
        log.entries.push(entry);
        log.lines.push(line_no);
    }
    if !saw_header {
        return Err(DecodeError::Header { line: 1, message: "missing header line".into() });
    }
    Ok(log)
}

pub fn parse_trace(text: &str) -> Result<TraceLog, DecodeError> {
    read_trace(text.as_bytes())
}

pub fn write_trace(out: &mut impl Write, entries: &[LogEntry]) -> Result<(), std::io::Error> {
    writeln!(out, "{}", encode_header(TRACE_FORMAT))?;
    for e in entries {
        let line = encode_entry(e).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}
