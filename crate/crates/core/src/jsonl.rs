//! Line-delimited JSON reading and writing.
//!
//! Readers collect record-level errors instead of failing, so one bad line
//! never aborts a corpus run. Writers fail fast and report how many records
//! made it out.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::model::{Abstract, Validate};

/// A bad input line. `line` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
#[error("write failed after {written} records: {source}")]
pub struct WriteError {
    pub written: usize,
    #[source]
    pub source: io::Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadOutcome<T> {
    pub records: Vec<T>,
    pub errors: Vec<RecordError>,
}

impl<T> Default for ReadOutcome<T> {
    fn default() -> Self {
        ReadOutcome { records: Vec::new(), errors: Vec::new() }
    }
}

/// Lazily parses and validates one record per non-blank line.
pub fn records<T, R>(reader: R) -> impl Iterator<Item = Result<T, RecordError>>
where
    T: DeserializeOwned + Validate,
    R: BufRead,
{
    reader.lines().enumerate().filter_map(|(idx, line)| {
        let line_no = idx + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some(Err(RecordError { line: line_no, message: e.to_string() })),
        };
        if line.trim().is_empty() {
            return None;
        }
        let parsed = serde_json::from_str::<T>(&line)
            .map_err(|e| e.to_string())
            .and_then(|rec| rec.validate().map(|_| rec));
        Some(parsed.map_err(|message| RecordError { line: line_no, message }))
    })
}

pub fn read_records<T, R>(reader: R) -> ReadOutcome<T>
where
    T: DeserializeOwned + Validate,
    R: BufRead,
{
    let mut out = ReadOutcome::default();
    for rec in records(reader) {
        match rec {
            Ok(r) => out.records.push(r),
            Err(e) => out.errors.push(e),
        }
    }
    out
}

pub fn read_abstracts<R: BufRead>(reader: R) -> ReadOutcome<Abstract> {
    read_records(reader)
}

pub fn read_records_file<T>(path: impl AsRef<Path>) -> io::Result<ReadOutcome<T>>
where
    T: DeserializeOwned + Validate,
{
    Ok(read_records(BufReader::new(File::open(path)?)))
}

/// Writes one JSON object per line and flushes. Returns the record count.
pub fn write_records<'a, T, I, W>(records: I, mut out: W) -> Result<usize, WriteError>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
    W: Write,
{
    let mut written = 0;
    for rec in records {
        let line = serde_json::to_string(rec)
            .map_err(|e| WriteError { written, source: io::Error::other(e) })?;
        out.write_all(line.as_bytes())
            .and_then(|_| out.write_all(b"\n"))
            .map_err(|source| WriteError { written, source })?;
        written += 1;
    }
    out.flush().map_err(|source| WriteError { written, source })?;
    Ok(written)
}

pub fn write_records_file<'a, T, I>(records: I, path: impl AsRef<Path>) -> Result<usize, WriteError>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let file = File::create(path).map_err(|source| WriteError { written: 0, source })?;
    write_records(records, BufWriter::new(file))
}
