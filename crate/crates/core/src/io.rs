//! File formats: count matrices (CSV or JSON), real matrices (CSV), run
//! metrics and sweep tables.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::fmt::num;
use crate::ranking::PreferenceMatrix;
use crate::{Error, Result};

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_error(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Parses rows of comma-separated fields, rejecting ragged rows. `cell`
/// converts one trimmed field; errors carry 1-based line and column.
fn parse_csv_rows<T>(
    text: &str,
    mut cell: impl FnMut(&str) -> std::result::Result<T, String>,
) -> Result<Vec<Vec<T>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<T>> = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_error(line, 1, e.to_string())
        })?;
        let line = record.position().map_or(rows.len() + 1, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(parse_error(
                line,
                expected.min(record.len()) + 1,
                format!("row has {} fields, expected {expected}", record.len()),
            ));
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(col, field)| cell(field).map_err(|msg| parse_error(line, col + 1, msg)))
            .collect::<Result<Vec<T>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_error(1, 1, "no data rows"));
    }
    Ok(rows)
}

fn count_cell(field: &str) -> std::result::Result<u64, String> {
    if field.starts_with('-') {
        return Err(format!("negative entry `{field}`"));
    }
    field
        .parse::<u64>()
        .map_err(|_| format!("`{field}` is not a nonnegative integer"))
}

fn real_cell(field: &str) -> std::result::Result<f64, String> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("`{field}` is not a finite real number")),
    }
}

fn square_counts(rows: Vec<Vec<u64>>) -> Result<PreferenceMatrix> {
    let d = rows.len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != d {
            return Err(parse_error(
                i + 1,
                row.len().min(d) + 1,
                format!("matrix must be square: {d} rows but {} columns", row.len()),
            ));
        }
        if row[i] != 0 {
            return Err(parse_error(i + 1, i + 1, format!("diagonal entry is {}, expected 0", row[i])));
        }
    }
    PreferenceMatrix::new(rows)
}

/// `d` rows of `d` comma-separated nonnegative integers with a zero diagonal.
pub fn parse_count_matrix_csv(text: &str) -> Result<PreferenceMatrix> {
    square_counts(parse_csv_rows(text, count_cell)?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CountsDocument {
    counts: Vec<Vec<serde_json::Number>>,
}

/// A JSON object with a single field `counts` holding the matrix rows.
/// Positions in matrix-level errors are reported as (row, column), 1-based.
pub fn parse_count_matrix_json(text: &str) -> Result<PreferenceMatrix> {
    let doc: CountsDocument = serde_json::from_str(text)
        .map_err(|e| parse_error(e.line(), e.column(), e.to_string()))?;
    let width = doc.counts.first().map_or(0, Vec::len);
    let mut rows = Vec::with_capacity(doc.counts.len());
    for (i, row) in doc.counts.iter().enumerate() {
        if row.len() != width {
            return Err(parse_error(
                i + 1,
                row.len().min(width) + 1,
                format!("row has {} entries, expected {width}", row.len()),
            ));
        }
        let parsed = row
            .iter()
            .enumerate()
            .map(|(j, v)| count_cell(&v.to_string()).map_err(|msg| parse_error(i + 1, j + 1, msg)))
            .collect::<Result<Vec<u64>>>()?;
        rows.push(parsed);
    }
    if rows.is_empty() {
        return Err(parse_error(1, 1, "`counts` is empty"));
    }
    square_counts(rows)
}

/// Reads a count matrix, choosing JSON for a `.json` extension and CSV otherwise.
pub fn read_preference_matrix(path: &Path) -> Result<PreferenceMatrix> {
    let text = read_file(path)?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        parse_count_matrix_json(&text)
    } else {
        parse_count_matrix_csv(&text)
    }
}

pub fn parse_real_matrix_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    parse_csv_rows(text, real_cell)
}

pub fn read_real_matrix_csv_path(path: &Path) -> Result<Vec<Vec<f64>>> {
    parse_real_matrix_csv(&read_file(path)?)
}

/// Rows of reals joined by commas, each value at twelve significant digits.
pub fn format_real_matrix_csv(rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| num(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
