//! Matrix and vector files: headerless CSV (one row per line) and the
//! MatrixMarket dense `array` format. Readers reject NaN and infinities.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{DenseMatrix, DenseVector};
use crate::error::{Error, Result};

fn parse_value(token: &str, line: usize) -> Result<f64> {
    let v: f64 = token
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: cannot parse {token:?} as a number")))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!("line {line}: non-finite value {token:?}")));
    }
    Ok(v)
}

pub fn read_matrix_csv<R: Read>(reader: R) -> Result<DenseMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row = record
            .iter()
            .map(|t| parse_value(t, i + 1))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("empty matrix file".into()));
    }
    DenseMatrix::from_rows(&rows)
}

/// Reads a vector stored either as a single column or a single row.
pub fn read_vector_csv<R: Read>(reader: R) -> Result<DenseVector> {
    let m = read_matrix_csv(reader)?;
    if m.cols() == 1 || m.rows() == 1 {
        Ok(DenseVector::from_trusted(m.as_slice().to_vec()))
    } else {
        Err(Error::Parse(format!(
            "expected a single row or column, found a {}x{} table",
            m.rows(),
            m.cols()
        )))
    }
}

pub fn read_matrix_market<R: Read>(mut reader: R) -> Result<DenseMatrix> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse("empty MatrixMarket file".into()))?;
    let fields: Vec<String> = header.split_whitespace().map(str::to_lowercase).collect();
    if fields.len() < 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(Error::Parse(format!("bad MatrixMarket header {header:?}")));
    }
    if fields[2] != "array" || fields[3] != "real" || fields[4] != "general" {
        return Err(Error::Parse(format!(
            "only 'array real general' MatrixMarket files are supported, got {header:?}"
        )));
    }
    let mut body = lines.filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('%'));
    let (size_line, size) = body
        .next()
        .ok_or_else(|| Error::Parse("missing MatrixMarket size line".into()))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| Error::Parse(format!("line {}: bad size {t:?}", size_line + 1)))
        })
        .collect::<Result<_>>()?;
    if dims.len() != 2 {
        return Err(Error::Parse(format!("line {}: expected 'rows cols'", size_line + 1)));
    }
    let (rows, cols) = (dims[0], dims[1]);
    let mut column_major = Vec::with_capacity(rows * cols);
    for (i, line) in body {
        for token in line.split_whitespace() {
            column_major.push(parse_value(token, i + 1)?);
        }
    }
    if column_major.len() != rows * cols {
        return Err(Error::Parse(format!(
            "expected {} MatrixMarket entries, found {}",
            rows * cols,
            column_major.len()
        )));
    }
    let mut data = vec![0.0; rows * cols];
    for j in 0..cols {
        for i in 0..rows {
            data[i * cols + j] = column_major[j * rows + i];
        }
    }
    DenseMatrix::new(rows, cols, data)
}

/// Reads a matrix file, choosing the format from the first line.
pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(b"%%MatrixMarket") || bytes.starts_with(b"%%matrixmarket") {
        read_matrix_market(bytes.as_slice())
    } else {
        read_matrix_csv(bytes.as_slice())
    }
}

pub fn write_matrix_csv<W: Write>(mut writer: W, m: &DenseMatrix) -> Result<()> {
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(writer, "{}", line.join(","))?;
    }
    Ok(())
}

/// One value per line.
pub fn write_vector_csv<W: Write>(mut writer: W, v: &[f64]) -> Result<()> {
    for x in v {
        writeln!(writer, "{x}")?;
    }
    Ok(())
}

pub fn write_matrix_market<W: Write>(mut writer: W, m: &DenseMatrix) -> Result<()> {
    writeln!(writer, "%%MatrixMarket matrix array real general")?;
    writeln!(writer, "{} {}", m.rows(), m.cols())?;
    for j in 0..m.cols() {
        for i in 0..m.rows() {
            writeln!(writer, "{}", m[(i, j)])?;
        }
    }
    Ok(())
}
