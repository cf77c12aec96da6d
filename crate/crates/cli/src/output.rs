use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Fixed 17-significant-digit rendering used by every text artifact.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

/// One produced file (or stdout stream) with its headline numbers.
#[derive(Debug, Clone)]
pub struct Artifact {
    /// `None` streams the artifact to stdout.
    pub path: Option<PathBuf>,
    pub content: String,
    pub metrics: Map<String, Value>,
}

impl Artifact {
    pub fn new(path: Option<PathBuf>, content: String) -> Self {
        Artifact {
            path,
            content,
            metrics: Map::new(),
        }
    }

    pub fn metric(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.metrics.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Debug, Serialize)]
pub struct SummaryRecord {
    pub path: String,
    pub sha256: String,
    pub metrics: Map<String, Value>,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub command: String,
    pub artifacts: Vec<SummaryRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_file(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::parse(format!("{}: {e}", path.display())))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

/// Writes every artifact and returns the summary. Artifacts without a path
/// go to stdout.
pub fn emit(command: &str, artifacts: Vec<Artifact>) -> Result<(Summary, Vec<String>), CliError> {
    let mut records = Vec::new();
    let mut streamed = Vec::new();
    for artifact in artifacts {
        let path = match &artifact.path {
            Some(p) => {
                write_file(p, &artifact.content)?;
                p.display().to_string()
            }
            None => {
                streamed.push(artifact.content.clone());
                "-".to_string()
            }
        };
        records.push(SummaryRecord {
            path,
            sha256: sha256_hex(artifact.content.as_bytes()),
            metrics: artifact.metrics,
        });
    }
    Ok((
        Summary {
            command: command.to_string(),
            artifacts: records,
        },
        streamed,
    ))
}

/// Header lines followed by one whitespace-separated row per matrix row.
pub fn matrix_text(header: &[String], m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for line in header {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| float(m[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn digits_label(digits: &[u32]) -> String {
    if digits.is_empty() {
        "-".to_string()
    } else {
        digits.iter().map(u32::to_string).collect::<Vec<_>>().join(".")
    }
}
