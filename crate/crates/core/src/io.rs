//! Matrix and data CSV files: comma-separated reals, one row per line, no
//! header.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{DataSet, Distribution};

fn parse_rows(input: impl Read, what: &str) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("{what} line {}: {e}", i + 1)))?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("{what} line {}: cannot parse {f:?}", i + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn to_matrix(rows: Vec<Vec<f64>>, what: &str) -> Result<DMatrix<f64>> {
    let ncol = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncol) {
        return Err(Error::Parse(format!("{what}: rows have different lengths")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncol, |i, j| rows[i][j]))
}

/// Reads a square matrix.
pub fn parse_matrix_csv(input: impl Read) -> Result<DMatrix<f64>> {
    let m = to_matrix(parse_rows(input, "matrix")?, "matrix")?;
    if m.nrows() == 0 || m.nrows() != m.ncols() {
        return Err(Error::Parse(format!(
            "matrix must be square and non-empty, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m)
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    parse_matrix_csv(File::open(path)?)
}

/// Writes entries with shortest round-trip formatting.
pub fn write_matrix_csv(m: &DMatrix<f64>, w: &mut impl Write) -> Result<()> {
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_data_csv(path: &Path, distribution: Distribution) -> Result<DataSet> {
    let m = to_matrix(parse_rows(File::open(path)?, "data")?, "data")?;
    DataSet::new(m, distribution)
}

pub fn write_data_csv(data: &DataSet, w: &mut impl Write) -> Result<()> {
    write_matrix_csv(&data.rows, w)
}
