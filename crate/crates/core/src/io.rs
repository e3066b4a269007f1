//! Small file formats shared by the pipeline stages.
//!
//! * CSV: one header line, comma-separated `f64` rows.
//! * Binary matrices: 8-byte magic `DNMAT001`, rows and cols as little-endian
//!   `u64`, then row-major little-endian `f64`.
//! * JSON via serde.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

const MATRIX_MAGIC: &[u8; 8] = b"DNMAT001";

pub(crate) fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn read_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

/// Writes `bytes`, creating missing parent directories.
pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&read_string(path)?)?)
}

pub fn write_csv<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            write!(s, "{v}").unwrap();
        }
        s.push('\n');
    }
    write_bytes(path, s.as_bytes())
}

/// Returns the header fields and every data row. All rows must have the
/// header's width.
pub fn read_csv(path: &Path, what: &'static str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = read_string(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines.next().ok_or(Error::Parse {
        what,
        line: 1,
        message: "empty file".into(),
    })?;
    let header: Vec<String> = head.split(',').map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, line) in lines {
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                what,
                line: i + 1,
                message: e.to_string(),
            })?;
        if row.len() != header.len() {
            return Err(Error::Parse {
                what,
                line: i + 1,
                message: format!("{} fields, header has {}", row.len(), header.len()),
            });
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Single-column CSV with header `value`.
pub fn write_vector_csv(path: &Path, values: &[f64]) -> Result<()> {
    write_csv(path, &["value".to_string()], values.iter().map(|v| vec![*v]))
}

pub fn read_vector_csv(path: &Path) -> Result<Vec<f64>> {
    let (header, rows) = read_csv(path, "coefficient csv")?;
    if header.len() != 1 {
        return Err(Error::Parse {
            what: "coefficient csv",
            line: 1,
            message: format!("expected one column, got {}", header.len()),
        });
    }
    Ok(rows.into_iter().map(|r| r[0]).collect())
}

pub fn encode_matrix(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * m.len());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out
}

pub fn decode_matrix(bytes: &[u8]) -> Result<DMatrix<f64>> {
    let bad = |message: String| Error::Parse {
        what: "binary matrix",
        line: 0,
        message,
    };
    if bytes.len() < 24 || &bytes[..8] != MATRIX_MAGIC {
        return Err(bad("missing DNMAT001 header".into()));
    }
    let word = |k: usize| u64::from_le_bytes(bytes[k..k + 8].try_into().unwrap()) as usize;
    let (rows, cols) = (word(8), word(16));
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(24))
        .ok_or_else(|| bad(format!("absurd dimensions {rows}x{cols}")))?;
    if bytes.len() != expected {
        return Err(bad(format!(
            "{rows}x{cols} needs {expected} bytes, found {}",
            bytes.len()
        )));
    }
    let data = bytes[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    Ok(DMatrix::from_row_iterator(rows, cols, data))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_bytes(path, &encode_matrix(m))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode_matrix(&bytes)
}

/// Headerless CSV dump for inspection.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut s = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                s.push(',');
            }
            write!(s, "{}", m[(i, j)]).unwrap();
        }
        s.push('\n');
    }
    write_bytes(path, s.as_bytes())
}
