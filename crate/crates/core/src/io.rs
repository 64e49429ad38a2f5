//! Plot-ready CSV emission. Numbers use 17 significant digits in scientific notation,
//! which round-trips every `f64` and does not depend on locale.

use std::io::Write;

use ndarray::Array2;

use crate::error::Result;

pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a lattice table: header row of x-coordinates, first column t-coordinates.
pub fn write_lattice_csv<W: Write>(out: W, h: f64, values: &Array2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let (rows, cols) = values.dim();
    let mut header = Vec::with_capacity(cols + 1);
    header.push("t\\x".to_string());
    header.extend((0..cols).map(|j| fmt_num(j as f64 * h)));
    w.write_record(&header)?;
    for i in 0..rows {
        let mut rec = Vec::with_capacity(cols + 1);
        rec.push(fmt_num(i as f64 * h));
        rec.extend(values.row(i).iter().map(|&v| fmt_num(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes rows of numbers under a header.
pub fn write_table_csv<W: Write>(out: W, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|&v| fmt_num(v)))?;
    }
    w.flush()?;
    Ok(())
}
