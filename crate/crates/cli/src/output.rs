//! Artifacts and how they land on disk.
//!
//! Data files are a pure function of (config, seed). CSV files open with a
//! `#` comment line carrying the config hash and seed; JSON files carry the
//! same pair in a `provenance` object. Wall-clock information goes only into
//! the `run.meta.json` sidecar.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Format;
use crate::CliError;

pub const META_FILE: &str = "run.meta.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    pub fn header_line(&self) -> String {
        format!("# zenoline config_sha256={} seed={}\n", self.config_sha256, self.seed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Shortest round-trip form; switches to exponent notation for very small or large values.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Clone, Debug, PartialEq)]
pub enum Artifact {
    Csv { name: String, table: Table },
    Json { name: String, value: Value },
}

impl Artifact {
    pub fn csv(name: &str, table: Table) -> Self {
        Artifact::Csv {
            name: name.to_string(),
            table,
        }
    }

    pub fn json(name: &str, value: impl Serialize) -> Self {
        Artifact::Json {
            name: name.to_string(),
            value: serde_json::to_value(value).expect("result serializes"),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Artifact::Csv { name, .. } | Artifact::Json { name, .. } => name,
        }
    }

    pub fn format(&self) -> Format {
        match self {
            Artifact::Csv { .. } => Format::Csv,
            Artifact::Json { .. } => Format::Json,
        }
    }

    pub fn render(&self, provenance: &Provenance) -> Result<Vec<u8>, CliError> {
        match self {
            Artifact::Csv { table, .. } => {
                let mut out = provenance.header_line().into_bytes();
                {
                    let mut writer = csv::Writer::from_writer(&mut out);
                    let io = |e: csv::Error| CliError::io("rendering CSV", e.into());
                    writer.write_record(&table.columns).map_err(io)?;
                    for row in &table.rows {
                        writer.write_record(row).map_err(io)?;
                    }
                    writer.flush().map_err(|e| CliError::io("rendering CSV", e))?;
                }
                Ok(out)
            }
            Artifact::Json { value, .. } => {
                let mut doc = match value {
                    Value::Object(map) => map.clone(),
                    other => {
                        let mut map = serde_json::Map::new();
                        map.insert("result".into(), other.clone());
                        map
                    }
                };
                doc.insert("provenance".into(), json!(provenance));
                let mut out = serde_json::to_vec_pretty(&doc).expect("result serializes");
                out.push(b'\n');
                Ok(out)
            }
        }
    }
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Run description for the sidecar file.
pub struct RunInfo<'a> {
    pub command: &'a str,
    pub started: f64,
}

impl<'a> RunInfo<'a> {
    pub fn start(command: &'a str) -> Self {
        Self {
            command,
            started: unix_now(),
        }
    }
}

/// Writes the artifacts whose format is enabled, plus the sidecar. Returns the written paths.
pub fn write_artifacts(
    dir: &Path,
    artifacts: &[Artifact],
    formats: &[Format],
    provenance: &Provenance,
    info: &RunInfo<'_>,
) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    let mut written = Vec::new();
    for artifact in artifacts.iter().filter(|a| formats.contains(&a.format())) {
        let path = dir.join(artifact.name());
        std::fs::write(&path, artifact.render(provenance)?)
            .map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
        written.push(path);
    }
    let meta = json!({
        "command": info.command,
        "version": env!("CARGO_PKG_VERSION"),
        "started_unix": info.started,
        "finished_unix": unix_now(),
        "threads": rayon::current_num_threads(),
        "config_sha256": provenance.config_sha256,
        "seed": provenance.seed,
        "files": written
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect::<Vec<_>>(),
    });
    let meta_path = dir.join(META_FILE);
    let mut bytes = serde_json::to_vec_pretty(&meta).expect("metadata serializes");
    bytes.push(b'\n');
    std::fs::write(&meta_path, bytes)
        .map_err(|e| CliError::io(format!("writing {}", meta_path.display()), e))?;
    Ok(written)
}
