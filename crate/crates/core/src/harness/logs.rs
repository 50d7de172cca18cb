//! Line-delimited JSON episode logs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use super::{EpisodeLog, SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed log record on line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("line {line}: schema version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { line: usize, found: u64, expected: u32 },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: Option<u64>,
}

pub fn write_logs_to<W: Write>(logs: &[EpisodeLog], out: W) -> Result<(), LogError> {
    let mut out = BufWriter::new(out);
    for log in logs {
        serde_json::to_writer(&mut out, log).map_err(|source| LogError::Json { line: 0, source })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Writes one episode per line, replacing the file if it exists.
pub fn write_logs(logs: &[EpisodeLog], path: impl AsRef<Path>) -> Result<(), LogError> {
    write_logs_to(logs, File::create(path)?)
}

pub fn read_logs_from<R: Read>(input: R) -> Result<Vec<EpisodeLog>, LogError> {
    let mut logs = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let probe: VersionProbe =
            serde_json::from_str(&line).map_err(|source| LogError::Json { line: line_no, source })?;
        let found = probe.schema_version.unwrap_or(0);
        if found != u64::from(SCHEMA_VERSION) {
            return Err(LogError::SchemaVersionMismatch { line: line_no, found, expected: SCHEMA_VERSION });
        }
        logs.push(serde_json::from_str(&line).map_err(|source| LogError::Json { line: line_no, source })?);
    }
    Ok(logs)
}

pub fn read_logs(path: impl AsRef<Path>) -> Result<Vec<EpisodeLog>, LogError> {
    read_logs_from(File::open(path)?)
}
