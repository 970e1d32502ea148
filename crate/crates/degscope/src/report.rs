//! Versioned JSON and flat CSV report writers.

use std::path::Path;

use serde::Serialize;

use crate::dataset::write_file;
use crate::error::{Error, Result};

/// Bumped whenever a report layout changes incompatibly.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct Versioned<'a, T: Serialize> {
    schema_version: u32,
    kind: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

/// Serializes `body` (a struct or map) with `schema_version` and `kind` fields prepended.
pub fn to_json<T: Serialize>(kind: &str, body: &T) -> serde_json::Result<String> {
    let mut s = serde_json::to_string_pretty(&Versioned {
        schema_version: SCHEMA_VERSION,
        kind,
        body,
    })?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, kind: &str, body: &T) -> Result<()> {
    let s = to_json(kind, body).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })?;
    write_file(path, s.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })
}

/// Writes serializable rows as CSV with a header from the first row's field names.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let wrap = |source| Error::Csv {
        path: path.into(),
        source,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(wrap)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| wrap(csv::Error::from(e.into_error())))?;
    write_file(path, &bytes)
}

/// Writes CSV with an explicit header; use when rows may be empty or ragged.
pub fn write_csv_records(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let wrap = |source| Error::Csv {
        path: path.into(),
        source,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(r).map_err(wrap)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| wrap(csv::Error::from(e.into_error())))?;
    write_file(path, &bytes)
}

pub fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let wrap = |source| Error::Csv {
        path: path.into(),
        source,
    };
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(wrap)
}
