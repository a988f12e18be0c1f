//! Per-session command log, one JSON record per line: a `header` with the
//! configuration, then each `command` as the engine applied it.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use mobias_core::engine::ReplayError;
use mobias_core::{replay, Command, MetricsFrame, ModelKind, ParamSet};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{SessionId, PROTOCOL_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Header {
        protocol_version: u32,
        session: SessionId,
        model: ModelKind,
        seed: u64,
        overrides: ParamSet,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scenario: Option<String>,
    },
    Command(Command),
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

pub fn log_file_name(session: SessionId) -> String {
    format!("session-{session}.jsonl")
}

/// Appends records, flushing after each write so the file is always a
/// complete prefix of the session.
#[derive(Debug)]
pub struct LogWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl LogWriter {
    pub fn create(path: &Path, header: &LogRecord) -> Result<Self, LogError> {
        let io = |source| LogError::Io { path: path.to_path_buf(), source };
        let file = File::create(path).map_err(io)?;
        let mut writer = Self { path: path.to_path_buf(), out: BufWriter::new(file) };
        writer.write(header)?;
        Ok(writer)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write(&mut self, record: &LogRecord) -> Result<(), LogError> {
        let line = serde_json::to_string(record).expect("log records serialize");
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(|source| LogError::Io { path: self.path.clone(), source })
    }

    pub fn commands(&mut self, commands: &[Command]) -> Result<(), LogError> {
        for c in commands {
            self.write(&LogRecord::Command(c.clone()))?;
        }
        Ok(())
    }
}

/// A parsed log.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub session: SessionId,
    pub model: ModelKind,
    pub seed: u64,
    pub overrides: ParamSet,
    pub scenario: Option<String>,
    pub commands: Vec<Command>,
}

impl SessionLog {
    pub fn read(path: &Path) -> Result<Self, LogError> {
        let malformed = |line: usize, message: String| LogError::Malformed { path: path.to_path_buf(), line, message };
        let file = File::open(path).map_err(|source| LogError::Io { path: path.to_path_buf(), source })?;
        let mut header = None;
        let mut commands = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| LogError::Io { path: path.to_path_buf(), source })?;
            if line.trim().is_empty() {
                continue;
            }
            let record: LogRecord = serde_json::from_str(&line).map_err(|e| malformed(i + 1, e.to_string()))?;
            match (record, &header) {
                (LogRecord::Header { protocol_version, session, model, seed, overrides, scenario }, None) => {
                    if protocol_version != PROTOCOL_VERSION {
                        return Err(malformed(i + 1, format!("protocol version {protocol_version} is not supported")));
                    }
                    header = Some(SessionLog { session, model, seed, overrides, scenario, commands: Vec::new() });
                }
                (LogRecord::Header { .. }, Some(_)) => return Err(malformed(i + 1, "second header".into())),
                (LogRecord::Command(_), None) => return Err(malformed(i + 1, "command before header".into())),
                (LogRecord::Command(c), Some(_)) => commands.push(c),
            }
        }
        let mut log = header.ok_or_else(|| malformed(0, "empty log".into()))?;
        log.commands = commands;
        Ok(log)
    }

    /// Frames `1..=until` rebuilt from the configuration and commands.
    pub fn replay(&self, until: u64) -> Result<Vec<MetricsFrame>, LogError> {
        Ok(replay(self.model, &self.overrides, self.seed, &self.commands, until)?)
    }
}
