//! CSV input and output of data matrices.

use std::io::{Read, Write};
use std::path::Path;

use crate::dist::DataMatrix;
use crate::error::{Error, Result};

/// Reads a CSV with a header row and one observation per row.
pub fn read_csv<R: Read>(r: R) -> Result<(Vec<String>, DataMatrix)> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    let d = header.len();
    let mut values = Vec::new();
    let mut n = 0;
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        if rec.len() != d {
            return Err(Error::invalid(format!("row {} has {} fields, header has {d}", i + 1, rec.len())));
        }
        for f in rec.iter() {
            let v: f64 = f.parse().map_err(|_| Error::invalid(format!("row {}: '{f}' is not a number", i + 1)))?;
            values.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("CSV has no data rows"));
    }
    Ok((header, DataMatrix::new(n, d, values)?))
}

pub fn read_csv_path(path: &Path) -> Result<(Vec<String>, DataMatrix)> {
    read_csv(std::fs::File::open(path)?)
}

pub fn write_csv<W: Write>(w: W, header: &[String], data: &DataMatrix) -> Result<()> {
    if header.len() != data.cols() {
        return Err(Error::DimensionMismatch {
            expected: data.cols(),
            got: header.len(),
        });
    }
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(header)?;
    for row in data.iter_rows() {
        wr.write_record(row.iter().map(|v| v.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let x = DataMatrix::from_rows(&[vec![1.5, -2.0], vec![0.1, 3e-20]]).unwrap();
        let header = vec!["a".to_string(), "b".to_string()];
        let mut buf = Vec::new();
        write_csv(&mut buf, &header, &x).unwrap();
        let (h, y) = read_csv(buf.as_slice()).unwrap();
        assert_eq!(h, header);
        assert_eq!(y, x);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_csv("a,b\n1,x\n".as_bytes()).is_err());
        assert!(read_csv("a,b\n".as_bytes()).is_err());
        assert!(read_csv("a,b\n1,2,3\n".as_bytes()).is_err());
        assert!(read_csv("a\nNaN\n".as_bytes()).is_err());
    }
}
