use std::path::{Path, PathBuf};

use dpta_core::{jsonl, Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub const FORMAT_VERSION: &str = "dpta-report/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Both,
}

impl Format {
    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }
}

#[derive(Serialize)]
struct Envelope<'a, C: Serialize, R: Serialize> {
    format_version: &'static str,
    command: &'static str,
    config: &'a C,
    #[serde(flatten)]
    result: &'a R,
}

/// Writes `result` wrapped with the format version and resolved config.
pub fn write_report<C: Serialize, R: Serialize>(
    path: &Path,
    command: &'static str,
    config: &C,
    result: &R,
) -> Result<()> {
    jsonl::write_json(
        path,
        &Envelope {
            format_version: FORMAT_VERSION,
            command,
            config,
            result,
        },
    )
}

pub fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => {
            let line = match &kind {
                csv::ErrorKind::Deserialize { pos: Some(p), .. } => p.line() as usize,
                _ => 0,
            };
            Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("{kind:?}"),
            }
        }
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a header row and then raw string records.
pub fn write_csv_records(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| csv_error(path, e)))
        .collect()
}

/// Header and string cells of a CSV file.
pub fn read_csv_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let rows = r
        .records()
        .map(|rec| {
            rec.map(|rec| rec.iter().map(|s| s.trim().to_string()).collect())
                .map_err(|e| csv_error(path, e))
        })
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

/// Reads a report written by [`write_report`], checking its format version.
pub fn read_report<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let v: serde_json::Value = jsonl::read_json(path)?;
    check_version(path, &v)?;
    serde_json::from_value(v).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })
}

pub fn check_version(path: &Path, v: &serde_json::Value) -> Result<()> {
    match v.get("format_version").and_then(|f| f.as_str()) {
        Some(FORMAT_VERSION) => Ok(()),
        Some(other) => Err(Error::validation(format!(
            "{}: format version {other:?}, expected {FORMAT_VERSION:?}",
            path.display()
        ))),
        None => Err(Error::validation(format!(
            "{}: no format_version",
            path.display()
        ))),
    }
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir.to_path_buf())
}

/// `0.5` → `"0.5"`, `1` → `"1"`, infinity → `"inf"`.
pub fn eps_tag(eps: f64) -> String {
    if eps.is_infinite() {
        "inf".into()
    } else {
        format!("{eps}")
    }
}
