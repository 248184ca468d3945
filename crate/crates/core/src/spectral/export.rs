//! Eigensystem export: a `k,nu_sq,center` CSV table and a raw eigenvector dump.
//!
//! The binary layout is little-endian: `rows: u64`, `cols: u64`, `a: i64`,
//! `b: i64`, followed by `rows * cols` `f64` values, row `k` being `ψ_k`.

use std::io::{Read, Write};

use super::EigenSystem;
use crate::error::{Error, Result};
use crate::model::Interval;

pub fn write_eigensystem_csv<W: Write>(es: &EigenSystem, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "nu_sq", "center"])?;
    for k in 0..es.dim() {
        w.write_record([
            k.to_string(),
            format!("{:.17e}", es.nu_sq[k]),
            es.centers[k].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_eigenvectors<W: Write>(es: &EigenSystem, mut out: W) -> Result<()> {
    let n = es.dim() as u64;
    out.write_all(&n.to_le_bytes())?;
    out.write_all(&n.to_le_bytes())?;
    out.write_all(&es.interval.a.to_le_bytes())?;
    out.write_all(&es.interval.b.to_le_bytes())?;
    for v in &es.vectors {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a dump written by [`write_eigenvectors`]: `(interval, rows, cols, data)`.
pub fn read_eigenvectors<R: Read>(mut input: R) -> Result<(Interval, usize, usize, Vec<f64>)> {
    let mut word = [0u8; 8];
    let mut next = |r: &mut R| -> Result<[u8; 8]> {
        r.read_exact(&mut word)?;
        Ok(word)
    };
    let rows = u64::from_le_bytes(next(&mut input)?) as usize;
    let cols = u64::from_le_bytes(next(&mut input)?) as usize;
    let a = i64::from_le_bytes(next(&mut input)?);
    let b = i64::from_le_bytes(next(&mut input)?);
    let interval = Interval::new(a, b)?;
    if cols != interval.len() {
        return Err(Error::LengthMismatch {
            expected: interval.len(),
            got: cols,
        });
    }
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(f64::from_le_bytes(next(&mut input)?));
    }
    Ok((interval, rows, cols, data))
}
