//! Line-record artifact files.
//!
//! Every artifact is UTF-8 text: a header line `{"format":"typecascade/<kind>","version":N}`
//! followed by one JSON object per line. Files are diff-able and re-loadable.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: missing or invalid header line")]
    MissingHeader { path: String },
    #[error("{path}: expected format `{expected}` v{version}, found `{found}` v{found_version}")]
    WrongFormat {
        path: String,
        expected: String,
        version: u32,
        found: String,
        found_version: u32,
    },
    #[error("{path}:{line}: {source}")]
    Record {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct Header {
    format: String,
    version: u32,
}

fn format_name(kind: &str) -> String {
    format!("typecascade/{kind}")
}

/// Renders records into the artifact text form.
pub fn render_records<T: Serialize>(kind: &str, records: &[T]) -> Result<String, ArtifactError> {
    let mut out = serde_json::to_string(&Header {
        format: format_name(kind),
        version: FORMAT_VERSION,
    })?;
    out.push('\n');
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_records<T: Serialize>(
    path: &Path,
    kind: &str,
    records: &[T],
) -> Result<(), ArtifactError> {
    let io_err = |source| ArtifactError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
    }
    let file = fs::File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    w.write_all(render_records(kind, records)?.as_bytes())
        .map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn parse_records<T: DeserializeOwned>(
    text: &str,
    kind: &str,
    origin: &str,
) -> Result<Vec<T>, ArtifactError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let header: Header = match lines.next() {
        Some((_, l)) => serde_json::from_str(l).map_err(|_| ArtifactError::MissingHeader {
            path: origin.to_string(),
        })?,
        None => {
            return Err(ArtifactError::MissingHeader {
                path: origin.to_string(),
            })
        }
    };
    let expected = format_name(kind);
    if header.format != expected || header.version != FORMAT_VERSION {
        return Err(ArtifactError::WrongFormat {
            path: origin.to_string(),
            expected,
            version: FORMAT_VERSION,
            found: header.format,
            found_version: header.version,
        });
    }
    lines
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|source| ArtifactError::Record {
                path: origin.to_string(),
                line: i + 1,
                source,
            })
        })
        .collect()
}

pub fn read_records<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<Vec<T>, ArtifactError> {
    let origin = path.display().to_string();
    let file = fs::File::open(path).map_err(|source| ArtifactError::Io {
        path: origin.clone(),
        source,
    })?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|source| ArtifactError::Io {
            path: origin.clone(),
            source,
        })?;
        text.push_str(&line);
        text.push('\n');
    }
    parse_records(&text, kind, &origin)
}
