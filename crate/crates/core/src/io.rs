//! Headerless numeric CSV: row-major, UTF-8, `.` as the decimal mark.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Shortest round-trip representation, e.g. `2.0`, `0.1`, `1e-10`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn read_matrix<R: Read>(input: R) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(Error::Io(format!(
                    "line {line}: expected {c} fields, found {}",
                    record.len()
                )))
            }
            _ => {}
        }
        for (k, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Io(format!("line {line}, field {}: `{field}` is not a number", k + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::Io(format!("line {line}, field {}: non-finite value", k + 1)));
            }
            values.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Io("empty CSV input".into()))?;
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

/// A vector stored either as one column or as one row.
pub fn read_vector<R: Read>(input: R) -> Result<DVector<f64>> {
    let m = read_matrix(input)?;
    if m.ncols() == 1 {
        Ok(m.column(0).into_owned())
    } else if m.nrows() == 1 {
        Ok(m.row(0).transpose())
    } else {
        Err(Error::Io(format!(
            "expected a single row or column, found {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn read_matrix_file(path: &Path) -> Result<DMatrix<f64>> {
    read_matrix(open(path)?).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn read_vector_file(path: &Path) -> Result<DVector<f64>> {
    read_vector(open(path)?).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// One value per line.
pub fn write_vector<W: Write>(mut out: W, v: &DVector<f64>) -> Result<()> {
    for x in v.iter() {
        writeln!(out, "{}", fmt_f64(*x))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_matrix<W: Write>(out: W, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| fmt_f64(*v)))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, -0.5, 1e-10, 3.25, 0.1, 7.0]);
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m).unwrap();
        assert_eq!(read_matrix(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn vectors_as_row_or_column() {
        assert_eq!(read_vector("1\n2\n3\n".as_bytes()).unwrap().as_slice(), &[1.0, 2.0, 3.0]);
        assert_eq!(read_vector("1,2,3\n".as_bytes()).unwrap().as_slice(), &[1.0, 2.0, 3.0]);
        assert!(read_vector("1,2\n3,4\n".as_bytes()).is_err());
    }

    #[test]
    fn errors_name_the_line() {
        let err = read_matrix("1,2\n3,x\n".as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        let err = read_matrix("1,2\n3\n".as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        assert!(read_matrix("".as_bytes()).is_err());
    }

    #[test]
    fn formatting() {
        assert_eq!(fmt_f64(2.0), "2.0");
        assert_eq!(fmt_f64(0.1), "0.1");
    }
}
