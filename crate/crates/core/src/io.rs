//! Plain-text CSV formats for matrices, vectors and data sets.
//!
//! Numbers are written with 17 significant digits in scientific notation so
//! every `f64` round-trips exactly, independent of locale. Lines starting
//! with `#` are comments.
//!
//! A square matrix file is a `p,<p>` header followed by `p` rows of `p`
//! values. A vector file is the same header followed by `p` single-value rows.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// 17 significant digits, `.` decimal separator.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn parse_cell(cell: &str, line: u64, column: usize) -> Result<f64> {
    cell.parse::<f64>().map_err(|_| Error::Parse {
        line,
        column,
        message: format!("`{cell}` is not a number"),
    })
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn write_comments<W: Write>(out: &mut W, comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    Ok(())
}

pub fn write_matrix<W: Write>(out: W, m: &DMatrix<f64>, comments: &[String]) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(crate::error::dim_mismatch("square matrix", format!("{}x{}", m.nrows(), m.ncols())));
    }
    let mut out = BufWriter::new(out);
    write_comments(&mut out, comments)?;
    writeln!(out, "p,{}", m.nrows())?;
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|&v| format_f64(v)).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_vector<W: Write>(out: W, v: &DVector<f64>, comments: &[String]) -> Result<()> {
    let mut out = BufWriter::new(out);
    write_comments(&mut out, comments)?;
    writeln!(out, "p,{}", v.len())?;
    for &x in v.iter() {
        writeln!(out, "{}", format_f64(x))?;
    }
    out.flush()?;
    Ok(())
}

fn read_with_header<R: Read>(input: R) -> Result<(usize, Vec<Vec<f64>>)> {
    let mut rdr = reader(input);
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| Error::InsufficientData("empty file".into()))??;
    let dim = match (header.get(0), header.get(1)) {
        (Some("p"), Some(p)) => p.parse::<usize>().map_err(|_| Error::Parse {
            line: line_of(&header),
            column: 2,
            message: format!("bad dimension `{p}`"),
        })?,
        _ => {
            return Err(Error::Parse {
                line: line_of(&header),
                column: 1,
                message: "expected `p,<dimension>` header".into(),
            })
        }
    };
    let mut rows = Vec::with_capacity(dim);
    for record in records {
        let record = record?;
        let line = line_of(&record);
        let row = record
            .iter()
            .enumerate()
            .map(|(j, cell)| parse_cell(cell, line, j + 1))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((dim, rows))
}

pub fn read_matrix<R: Read>(input: R) -> Result<DMatrix<f64>> {
    let (p, rows) = read_with_header(input)?;
    if rows.len() != p || rows.iter().any(|r| r.len() != p) {
        return Err(crate::error::dim_mismatch(
            format!("{p}x{p} matrix"),
            format!("{} rows", rows.len()),
        ));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
}

pub fn read_vector<R: Read>(input: R) -> Result<DVector<f64>> {
    let (p, rows) = read_with_header(input)?;
    if rows.len() != p || rows.iter().any(|r| r.len() != 1) {
        return Err(crate::error::dim_mismatch(
            format!("vector of length {p}"),
            format!("{} rows", rows.len()),
        ));
    }
    Ok(DVector::from_iterator(p, rows.into_iter().map(|r| r[0])))
}

/// Reads an `n × p` data matrix. A non-numeric first row is taken as a header.
pub fn read_data<R: Read>(input: R) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, record) in reader(input).records().enumerate() {
        let record = record?;
        let line = line_of(&record);
        let parsed: Result<Vec<f64>> = record
            .iter()
            .enumerate()
            .map(|(j, cell)| parse_cell(cell, line, j + 1))
            .collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if idx == 0 => continue,
            Err(e) => return Err(e),
        }
    }
    let p = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || p == 0 {
        return Err(Error::InsufficientData("no data rows".into()));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != p) {
        return Err(Error::Parse {
            line: bad as u64 + 1,
            column: rows[bad].len(),
            message: format!("expected {p} columns"),
        });
    }
    Ok(DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]))
}

pub fn write_data<W: Write>(out: W, x: &DMatrix<f64>, comments: &[String]) -> Result<()> {
    let mut out = BufWriter::new(out);
    write_comments(&mut out, comments)?;
    let header: Vec<String> = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for row in x.row_iter() {
        let cells: Vec<String> = row.iter().map(|&v| format_f64(v)).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    read_matrix(BufReader::new(File::open(path)?))
}

pub fn write_matrix_csv(path: impl AsRef<Path>, m: &DMatrix<f64>, comments: &[String]) -> Result<()> {
    write_matrix(File::create(path)?, m, comments)
}

pub fn read_vector_csv(path: impl AsRef<Path>) -> Result<DVector<f64>> {
    read_vector(BufReader::new(File::open(path)?))
}

pub fn write_vector_csv(path: impl AsRef<Path>, v: &DVector<f64>, comments: &[String]) -> Result<()> {
    write_vector(File::create(path)?, v, comments)
}

pub fn read_data_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    read_data(BufReader::new(File::open(path)?))
}

pub fn write_data_csv(path: impl AsRef<Path>, x: &DMatrix<f64>, comments: &[String]) -> Result<()> {
    write_data(File::create(path)?, x, comments)
}
