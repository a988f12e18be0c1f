//! Writing and reading run artifacts.
//!
//! Per replication: `<scenario>_seed<seed>.csv` (or `.json`). Per run:
//! `<scenario>_seed<base_seed>_summary.json`. CSV files open with a
//! `# mobias metrics ...` line carrying the schema version, then a header
//! row `tick,<metric names in model order>`. Floats are written in their
//! shortest round-trip form.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::runner::{Replication, RunArtifacts, StopReason, Summary};
use crate::engine::Command;
use crate::metrics::MetricsFrame;
use crate::model::ModelKind;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
}

/// JSON form of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFile {
    pub schema_version: u32,
    pub scenario: String,
    pub model: ModelKind,
    pub seed: u64,
    pub metric_names: Vec<String>,
    pub initial: MetricsFrame,
    pub frames: Vec<MetricsFrame>,
    pub stop_reason: StopReason,
    pub commands: Vec<Command>,
}

impl ReplicationFile {
    pub fn new(run: &RunArtifacts, rep: &Replication) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            scenario: run.scenario.clone(),
            model: run.model,
            seed: rep.seed,
            metric_names: run.metric_names.clone(),
            initial: rep.initial.clone(),
            frames: rep.frames.clone(),
            stop_reason: rep.stop_reason,
            commands: rep.commands.clone(),
        }
    }

    pub fn replication(&self) -> Replication {
        Replication {
            seed: self.seed,
            initial: self.initial.clone(),
            frames: self.frames.clone(),
            stop_reason: self.stop_reason,
            commands: self.commands.clone(),
        }
    }
}

pub fn replication_file_name(scenario: &str, seed: u64, format: Format) -> String {
    let ext = match format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    format!("{scenario}_seed{seed}.{ext}")
}

pub fn summary_file_name(scenario: &str, base_seed: u64) -> String {
    format!("{scenario}_seed{base_seed}_summary.json")
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ExportError + '_ {
    move |source| ExportError::Io { path: path.to_path_buf(), source }
}

/// Render one replication as CSV text.
pub fn csv_string(scenario: &str, model: ModelKind, names: &[String], rep: &Replication) -> String {
    let mut out = Vec::new();
    writeln!(out, "# mobias metrics schema_version={SCHEMA_VERSION} model={model} scenario={scenario} seed={}", rep.seed)
        .expect("writing to memory");
    {
        let mut w = csv::Writer::from_writer(&mut out);
        let mut header = vec!["tick".to_string()];
        header.extend(names.iter().cloned());
        w.write_record(&header).expect("writing to memory");
        for frame in &rep.frames {
            let mut row = vec![frame.tick.to_string()];
            row.extend(frame.values.iter().map(|v| v.to_string()));
            w.write_record(&row).expect("writing to memory");
        }
        w.flush().expect("writing to memory");
    }
    String::from_utf8(out).expect("csv output is utf-8")
}

/// Write every replication and the summary into `dir`. Returns the paths
/// written, replications first.
pub fn export(run: &RunArtifacts, dir: &Path, format: Format) -> Result<Vec<PathBuf>, ExportError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();
    for rep in &run.replications {
        let path = dir.join(replication_file_name(&run.scenario, rep.seed, format));
        let text = match format {
            Format::Csv => csv_string(&run.scenario, run.model, &run.metric_names, rep),
            Format::Json => to_json(&ReplicationFile::new(run, rep)),
        };
        fs::write(&path, text).map_err(io(&path))?;
        written.push(path);
    }
    let path = dir.join(summary_file_name(&run.scenario, run.base_seed));
    fs::write(&path, to_json(&run.summary)).map_err(io(&path))?;
    written.push(path);
    Ok(written)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("artifacts serialize");
    text.push('\n');
    text
}

pub fn read_replication_json(path: &Path) -> Result<ReplicationFile, ExportError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    let file: ReplicationFile =
        serde_json::from_str(&text).map_err(|e| ExportError::Malformed { path: path.to_path_buf(), message: e.to_string() })?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(ExportError::Malformed {
            path: path.to_path_buf(),
            message: format!("schema version {} is not supported", file.schema_version),
        });
    }
    Ok(file)
}

pub fn read_summary(path: &Path) -> Result<Summary, ExportError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    serde_json::from_str(&text).map_err(|e| ExportError::Malformed { path: path.to_path_buf(), message: e.to_string() })
}

/// Metric names and frames of a CSV replication file.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<MetricsFrame>), ExportError> {
    let malformed = |message: String| ExportError::Malformed { path: path.to_path_buf(), message };
    let text = fs::read_to_string(path).map_err(io(path))?;
    let first = text.lines().next().unwrap_or("");
    if !first.starts_with("# mobias metrics ") {
        return Err(malformed("missing `# mobias metrics` header line".into()));
    }
    if !first.split_whitespace().any(|kv| kv == format!("schema_version={SCHEMA_VERSION}")) {
        return Err(malformed(format!("unsupported schema in `{first}`")));
    }
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| malformed(e.to_string()))?.clone();
    if header.get(0) != Some("tick") {
        return Err(malformed("first column must be `tick`".into()));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut frames = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| malformed(e.to_string()))?;
        let tick = record[0].parse().map_err(|_| malformed(format!("bad tick `{}`", &record[0])))?;
        let values = record
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>().map_err(|_| malformed(format!("bad value `{v}`"))))
            .collect::<Result<_, _>>()?;
        frames.push(MetricsFrame { tick, values });
    }
    Ok((names, frames))
}
