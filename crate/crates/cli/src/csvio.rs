//! Samples×columns CSV tables with a header row.

use std::path::Path;

use coreg_core::DataMatrix;
use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};
use crate::output::fmt_f64;

/// Parsed CSV: header names, optional row identifiers, numeric body
/// (`n_samples × n_columns`).
#[derive(Debug, Clone)]
pub struct NumericTable {
    pub columns: Vec<String>,
    pub row_ids: Option<Vec<String>>,
    pub values: DMatrix<f64>,
}

impl NumericTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Selected columns as a `columns × samples` matrix.
    pub fn select_rows(&self, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(idx.len(), self.values.nrows(), |r, s| self.values[(s, idx[r])])
    }
}

fn parse_cell(s: &str) -> Option<f64> {
    let t = s.trim();
    match t {
        "NaN" | "nan" => Some(f64::NAN),
        "inf" | "Inf" | "+inf" => Some(f64::INFINITY),
        "-inf" | "-Inf" => Some(f64::NEG_INFINITY),
        _ => t.parse().ok(),
    }
}

/// Reads a numeric table. `id_column` names a non-numeric column holding
/// sample identifiers; every other column must parse as a float. Line numbers
/// in diagnostics are 1-based file lines (the header is line 1).
pub fn parse_table(text: &str, origin: &Path, id_column: Option<&str>) -> CliResult<NumericTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::input(origin, format!("cannot read header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(CliError::input(origin, "empty header"));
    }
    for (i, h) in headers.iter().enumerate() {
        if headers[..i].contains(h) {
            return Err(CliError::input(origin, format!("duplicate column '{h}'")));
        }
    }
    let id_idx = match id_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CliError::input(origin, format!("id column '{name}' not in header")))?,
        ),
        None => None,
    };
    let columns: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != id_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut data = Vec::new();
    let mut ids = Vec::new();
    let mut n = 0;
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::input(origin, format!("malformed CSV: {e}")))?;
        let line = rec.position().map_or(n + 2, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != headers.len() {
            return Err(CliError::input(
                origin,
                format!(
                    "line {line}: ragged row with {} fields, header has {}",
                    rec.len(),
                    headers.len()
                ),
            ));
        }
        for (j, cell) in rec.iter().enumerate() {
            if Some(j) == id_idx {
                ids.push(cell.to_string());
                continue;
            }
            let v = parse_cell(cell).ok_or_else(|| {
                CliError::input(
                    origin,
                    format!(
                        "line {line}, column {} ('{}'): non-numeric value '{cell}'",
                        j + 1,
                        headers[j]
                    ),
                )
            })?;
            data.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(CliError::input(origin, "no data rows after the header"));
    }
    Ok(NumericTable {
        values: DMatrix::from_row_slice(n, columns.len(), &data),
        columns,
        row_ids: id_idx.map(|_| ids),
    })
}

pub fn read_table(path: &Path, id_column: Option<&str>) -> CliResult<NumericTable> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e.to_string()))?;
    parse_table(&text, path, id_column)
}

/// CSV writer that buffers into memory; the caller writes the bytes
/// atomically.
pub struct CsvBuf(csv::Writer<Vec<u8>>);

impl CsvBuf {
    pub fn new<S: AsRef<[u8]>>(header: impl IntoIterator<Item = S>) -> Self {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(vec![]);
        w.write_record(header).expect("in-memory write");
        Self(w)
    }

    pub fn row<S: AsRef<[u8]>>(&mut self, fields: impl IntoIterator<Item = S>) {
        self.0.write_record(fields).expect("in-memory write");
    }

    pub fn finish(self) -> Vec<u8> {
        self.0.into_inner().expect("in-memory flush")
    }
}

/// Samples×variables CSV of a data matrix at full precision.
pub fn data_matrix_csv(m: &DataMatrix, names: &[String]) -> Vec<u8> {
    let sv = m.to_samples_by_variables();
    let v = sv.values();
    let mut w = CsvBuf::new(names);
    for s in 0..v.nrows() {
        w.row(v.row(s).iter().map(|&x| fmt_f64(x)));
    }
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("in.csv")
    }

    #[test]
    fn parses_with_ids() {
        let t = parse_table("id,a,b\ns1,1,2.5\ns2,-3,4e-2\n", p(), Some("id")).unwrap();
        assert_eq!(t.columns, ["a", "b"]);
        assert_eq!(t.row_ids.as_deref().unwrap(), ["s1", "s2"]);
        assert_eq!(t.values[(1, 1)], 0.04);
        assert_eq!(t.select_rows(&[1]).shape(), (1, 2));
    }

    #[test]
    fn ragged_row_names_the_line() {
        let e = parse_table("a,b\n1,2\n3\n", p(), None).unwrap_err().to_string();
        assert!(e.contains("line 3") && e.contains("ragged"), "{e}");
    }

    #[test]
    fn non_numeric_cell_names_line_and_column() {
        let e = parse_table("a,b\n1,2\n3,x\n", p(), None).unwrap_err().to_string();
        assert!(
            e.contains("line 3") && e.contains("column 2") && e.contains("'b'"),
            "{e}"
        );
    }

    #[test]
    fn header_only_is_an_error() {
        assert!(parse_table("a,b\n", p(), None).is_err());
        assert!(parse_table("", p(), None).is_err());
    }

    #[test]
    fn duplicate_header_rejected() {
        assert!(parse_table("a,a\n1,2\n", p(), None).is_err());
    }
}
