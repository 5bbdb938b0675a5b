//! CSV and JSON artifacts.
//!
//! Matrices are written with a `v1,...,vp` header, vectors with a single
//! named column. Floats use the shortest representation that parses back to
//! the same value.

use std::fs;
use std::path::{Path, PathBuf};

use knockforge::{Matrix, Vector};
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:?}")
    }
}

pub fn read_matrix(path: &Path) -> CliResult<Matrix> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let bad = |msg: String| CliError::Data(format!("{}: {msg}", path.display()));
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let p = headers.len();
    if p == 0 || headers.iter().all(str::is_empty) {
        return Err(bad("missing header line".into()));
    }
    let mut values = Vec::new();
    let mut n = 0;
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => CliError::io(path, &e),
            _ => bad(format!("line {line}: {e}")),
        })?;
        if record.len() != p {
            return Err(bad(format!(
                "line {line} has {} fields, header has {p}",
                record.len()
            )));
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                bad(format!(
                    "line {line}, column {}: cannot parse {field:?} as a number",
                    j + 1
                ))
            })?;
            values.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(bad("no data rows".into()));
    }
    Ok(Matrix::from_row_slice(n, p, &values))
}

pub fn read_vector(path: &Path) -> CliResult<Vector> {
    let m = read_matrix(path)?;
    if m.ncols() != 1 {
        return Err(CliError::Data(format!(
            "{}: expected one column, found {}",
            path.display(),
            m.ncols()
        )));
    }
    Ok(m.column(0).into_owned())
}

pub fn matrix_csv(m: &Matrix) -> String {
    let mut out = String::with_capacity(m.nrows() * m.ncols() * 20);
    let header: Vec<String> = (1..=m.ncols()).map(|j| format!("v{j}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in m.row_iter() {
        let fields: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn vector_csv(v: &Vector, name: &str) -> String {
    let mut out = format!("{name}\n");
    for &x in v.iter() {
        out.push_str(&fmt_f64(x));
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable report");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_text(path, &to_json(value))
}

/// Write a JSON report to `out`, or to stdout when absent.
pub fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> CliResult<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            print!("{}", to_json(value));
            Ok(())
        }
    }
}

/// `file.csv` → `file.csv.<suffix>`.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

/// A JSON number, or the strings `"inf"`, `"-inf"`, `"nan"`.
pub fn json_f64(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(v)
        .map(serde_json::Value::Number)
        .unwrap_or_else(|| fmt_f64(v).into())
}
