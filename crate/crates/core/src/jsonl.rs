//! JSON-lines files with a versioned header record.
//!
//! Every file starts with a single header line naming the schema and its
//! version, followed by one record per line. Whole-file writes go through a
//! temp file in the same directory and are renamed into place; appends write
//! one complete line per call. A torn final line (no trailing newline, not
//! parseable) is ignored on read so an interrupted append never poisons the
//! file.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: missing header record")]
    MissingHeader { path: PathBuf },
    #[error("{path}: expected schema `{expected}`, found `{found}`")]
    SchemaMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}: unsupported schema version {found} (supported: {supported})")]
    UnsupportedVersion {
        path: PathBuf,
        found: u32,
        supported: u32,
    },
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, JsonlError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> JsonlError + '_ {
    move |source| JsonlError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// First line of every JSON-lines store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub schema: String,
    pub version: u32,
}

impl Header {
    pub fn new(schema: impl Into<String>, version: u32) -> Self {
        Self {
            schema: schema.into(),
            version,
        }
    }

    fn check(&self, path: &Path, expected: &Header) -> Result<()> {
        if self.schema != expected.schema {
            return Err(JsonlError::SchemaMismatch {
                path: path.to_path_buf(),
                expected: expected.schema.clone(),
                found: self.schema.clone(),
            });
        }
        if self.version != expected.version {
            return Err(JsonlError::UnsupportedVersion {
                path: path.to_path_buf(),
                found: self.version,
                supported: expected.version,
            });
        }
        Ok(())
    }
}

/// Serializes `header` followed by `records`, one JSON document per line.
pub fn to_string<T: Serialize>(header: &Header, records: &[T]) -> Result<String> {
    let mut out = serde_json::to_string(header)?;
    out.push('\n');
    for record in records {
        out.push_str(&serde_json::to_string(record)?);
        out.push('\n');
    }
    Ok(out)
}

/// Replaces `path` atomically with the given bytes.
pub fn write_bytes_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| JsonlError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

/// Rewrites the whole file atomically.
pub fn write_all<T: Serialize>(path: &Path, header: &Header, records: &[T]) -> Result<()> {
    write_bytes_atomic(path, to_string(header, records)?.as_bytes())
}

/// Appends one record, creating the file (with header) if it does not exist.
pub fn append<T: Serialize>(path: &Path, header: &Header, record: &T) -> Result<()> {
    if !path.exists() {
        write_all::<T>(path, header, &[])?;
    } else {
        // validate before extending someone else's file
        read_header(path, header)?;
    }
    let mut line = serde_json::to_string(record)?;
    line.push('\n');
    let mut file = OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    file.write_all(line.as_bytes()).map_err(io_err(path))?;
    file.sync_data().map_err(io_err(path))?;
    Ok(())
}

fn read_header(path: &Path, expected: &Header) -> Result<Header> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut first = String::new();
    BufReader::new(file)
        .read_line(&mut first)
        .map_err(io_err(path))?;
    if first.trim().is_empty() {
        return Err(JsonlError::MissingHeader {
            path: path.to_path_buf(),
        });
    }
    let header: Header = serde_json::from_str(first.trim()).map_err(|source| JsonlError::Parse {
        path: path.to_path_buf(),
        line: 1,
        source,
    })?;
    header.check(path, expected)?;
    Ok(header)
}

/// Parses a JSON-lines document held in memory.
pub fn from_str<T: DeserializeOwned>(path: &Path, text: &str, expected: &Header) -> Result<Vec<T>> {
    let mut lines = text.split_inclusive('\n').enumerate().peekable();
    let header_line = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) => break l,
            None => {
                return Err(JsonlError::MissingHeader {
                    path: path.to_path_buf(),
                })
            }
        }
    };
    let header: Header =
        serde_json::from_str(header_line.trim()).map_err(|source| JsonlError::Parse {
            path: path.to_path_buf(),
            line: 1,
            source,
        })?;
    header.check(path, expected)?;

    let mut records = Vec::new();
    while let Some((idx, raw)) = lines.next() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(record) => records.push(record),
            Err(_) if lines.peek().is_none() && !raw.ends_with('\n') => {
                log::warn!("{}: ignoring torn trailing line {}", path.display(), idx + 1);
            }
            Err(source) => {
                return Err(JsonlError::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    source,
                })
            }
        }
    }
    Ok(records)
}

/// Reads all records; a missing file yields an empty list.
pub fn read_all<T: DeserializeOwned>(path: &Path, expected: &Header) -> Result<Vec<T>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    from_str(path, &text, expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Row {
        id: u32,
        name: String,
    }

    fn header() -> Header {
        Header::new("test/rows", 1)
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.jsonl");
        let rows = vec![
            Row { id: 1, name: "a".into() },
            Row { id: 2, name: "b".into() },
        ];
        write_all(&path, &header(), &rows).unwrap();
        let back: Vec<Row> = read_all(&path, &header()).unwrap();
        assert_eq!(back, rows);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("{\"schema\":\"test/rows\",\"version\":1}\n"));
    }

    #[test]
    fn append_creates_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.jsonl");
        append(&path, &header(), &Row { id: 7, name: "x".into() }).unwrap();
        append(&path, &header(), &Row { id: 8, name: "y".into() }).unwrap();
        let back: Vec<Row> = read_all(&path, &header()).unwrap();
        assert_eq!(back.len(), 2);
    }

    #[test]
    fn torn_tail_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.jsonl");
        fs::write(
            &path,
            "{\"schema\":\"test/rows\",\"version\":1}\n{\"id\":1,\"name\":\"a\"}\n{\"id\":2,\"na",
        )
        .unwrap();
        let back: Vec<Row> = read_all(&path, &header()).unwrap();
        assert_eq!(back, vec![Row { id: 1, name: "a".into() }]);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.jsonl");
        fs::write(
            &path,
            "{\"schema\":\"test/rows\",\"version\":1}\n{\"id\":1,\n{\"id\":2,\"name\":\"b\"}\n",
        )
        .unwrap();
        let err = read_all::<Row>(&path, &header()).unwrap_err();
        assert!(matches!(err, JsonlError::Parse { line: 2, .. }));
    }

    #[test]
    fn schema_and_version_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.jsonl");
        write_all::<Row>(&path, &Header::new("other", 1), &[]).unwrap();
        assert!(matches!(
            read_all::<Row>(&path, &header()),
            Err(JsonlError::SchemaMismatch { .. })
        ));
        write_all::<Row>(&path, &Header::new("test/rows", 9), &[]).unwrap();
        assert!(matches!(
            read_all::<Row>(&path, &header()),
            Err(JsonlError::UnsupportedVersion { found: 9, .. })
        ));
    }

    #[test]
    fn missing_file_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<Row> = read_all(&dir.path().join("nope.jsonl"), &header()).unwrap();
        assert!(rows.is_empty());
    }
}
