use std::fs::{self, File};
use std::io::{BufReader, Read};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{HarnessError, Result};

pub const HASH_PREFIX: &str = "# config_hash: ";

pub fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| HarnessError::io(path, e))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    match File::open(path) {
        Ok(f) => Ok(BufReader::new(f)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(HarnessError::MissingArtifact(path.to_path_buf())),
        Err(e) => Err(HarnessError::io(path, e)),
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

/// Write a CSV body produced by `body`, preceded by the config hash line.
pub fn write_csv_with<F>(path: &Path, hash: &str, body: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> Result<()>,
{
    let mut buf = format!("{HASH_PREFIX}{hash}\n").into_bytes();
    body(&mut buf)?;
    write_bytes(path, &buf)
}

pub fn write_rows<I>(path: &Path, hash: &str, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    write_csv_with(path, hash, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        let err = |e: csv::Error| HarnessError::artifact(path, e);
        w.write_record(header).map_err(err)?;
        for row in rows {
            w.write_record(&row).map_err(err)?;
        }
        w.flush().map_err(|e| HarnessError::io(path, e))
    })
}

/// Header and rows of a CSV written by [`write_rows`]; comment lines skipped.
pub fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(open(path)?);
    let header = r
        .headers()
        .map_err(|e| HarnessError::artifact(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| HarnessError::artifact(path, e))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

/// Column `name` of every row, parsed.
pub fn column<T: std::str::FromStr>(path: &Path, header: &[String], rows: &[Vec<String>], name: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let i = header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| HarnessError::artifact(path, format!("no column `{name}`")))?;
    rows.iter()
        .map(|r| {
            r.get(i)
                .ok_or_else(|| HarnessError::artifact(path, format!("short row in column `{name}`")))?
                .parse::<T>()
                .map_err(|e| HarnessError::artifact(path, format!("column `{name}`: {e}")))
        })
        .collect()
}

/// The hash recorded on the first line of an artifact.
pub fn read_hash(path: &Path) -> Result<String> {
    let mut text = String::new();
    open(path)?
        .read_to_string(&mut text)
        .map_err(|e| HarnessError::io(path, e))?;
    let first = text.lines().next().unwrap_or_default();
    first
        .strip_prefix(HASH_PREFIX)
        .map(str::to_string)
        .ok_or_else(|| HarnessError::artifact(path, "no config hash header"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::artifact(path, e))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| HarnessError::artifact(path, e))
}

/// Render an optional number, empty when absent.
pub fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip_with_hash_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_rows(&path, "abc", &["a", "b"], vec![vec!["1".into(), "x".into()], vec!["2.5".into(), "y".into()]]).unwrap();
        assert_eq!(read_hash(&path).unwrap(), "abc");
        let (h, rows) = read_rows(&path).unwrap();
        assert_eq!(h, ["a", "b"]);
        assert_eq!(column::<f64>(&path, &h, &rows, "a").unwrap(), [1.0, 2.5]);
        assert!(column::<f64>(&path, &h, &rows, "b").is_err());
    }

    #[test]
    fn missing_files_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gone.csv");
        match read_rows(&path) {
            Err(HarnessError::MissingArtifact(p)) => assert_eq!(p, path),
            other => panic!("{other:?}"),
        }
    }
}
