//! Matrix serialization.
//!
//! * CSV: one matrix row per line, comma separated, 17 significant digits.
//! * Binary: `b"HINV"`, `u32` rows, `u32` cols (little endian), then
//!   `rows * cols` little-endian `f64` values in row-major order.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{HinvError, Result};

pub const MAGIC: &[u8; 4] = b"HINV";

/// Formats a value with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::with_capacity(m.len() * 24);
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format_f64(*v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Parses a numeric CSV table. A leading header row of non-numeric fields is skipped.
pub fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| HinvError::Format(e.to_string()))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if line == 0 => continue,
            Err(e) => return Err(HinvError::Format(format!("line {}: {e}", line + 1))),
        }
    }
    let ncols = rows.first().map(Vec::len).unwrap_or(0);
    if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(HinvError::Format(format!("row {} has a different number of columns", i + 1)));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_bytes(m: &DMatrix<f64>) -> Result<Vec<u8>> {
    let rows = u32::try_from(m.nrows()).map_err(|_| HinvError::Format("too many rows".into()))?;
    let cols = u32::try_from(m.ncols()).map_err(|_| HinvError::Format("too many columns".into()))?;
    let mut out = Vec::with_capacity(12 + 8 * m.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for row in m.row_iter() {
        for v in row.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn matrix_from_bytes(bytes: &[u8]) -> Result<DMatrix<f64>> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(HinvError::Format("missing HINV header".into()));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[12..];
    if payload.len() != rows * cols * 8 {
        return Err(HinvError::Format(format!(
            "payload has {} bytes, expected {} for a {rows}x{cols} matrix",
            payload.len(),
            rows * cols * 8
        )));
    }
    let values: Vec<f64> = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn write_matrix_csv(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, matrix_to_csv(m))?;
    Ok(())
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    matrix_from_csv(&fs::read_to_string(path)?)
}

pub fn write_matrix_bin(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, matrix_to_bytes(m)?)?;
    Ok(())
}

pub fn read_matrix_bin(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    matrix_from_bytes(&fs::read(path)?)
}

/// Reads a matrix, choosing the format from the file contents.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        matrix_from_bytes(&bytes)
    } else {
        let text = String::from_utf8(bytes).map_err(|e| HinvError::Format(e.to_string()))?;
        matrix_from_csv(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binary_layout() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = matrix_to_bytes(&m).unwrap();
        assert_eq!(&b[..4], b"HINV");
        assert_eq!(&b[4..8], &2u32.to_le_bytes());
        assert_eq!(&b[8..12], &3u32.to_le_bytes());
        assert_eq!(&b[12..20], &1.0f64.to_le_bytes());
        assert_eq!(&b[20..28], &2.0f64.to_le_bytes());
        assert_eq!(&b[36..44], &4.0f64.to_le_bytes());
        assert_eq!(b.len(), 12 + 48);
    }

    #[test]
    fn malformed_inputs() {
        assert!(matrix_from_bytes(b"NOPE").is_err());
        let mut b = matrix_to_bytes(&DMatrix::from_element(2, 2, 1.0)).unwrap();
        b.pop();
        assert!(matrix_from_bytes(&b).is_err());
        assert!(matrix_from_csv("1,2\n3\n").is_err());
        assert!(matrix_from_csv("1,2\n3,x\n").is_err());
    }

    #[test]
    fn csv_header_skipped() {
        let m = matrix_from_csv("c1,c2\n1.5,2\n-3,4e-3\n").unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.5, 2.0, -3.0, 4e-3]));
    }

    #[test]
    fn csv_uses_17_significant_digits() {
        let s = matrix_to_csv(&DMatrix::from_element(1, 1, 0.1));
        assert_eq!(s.trim(), "1.0000000000000001e-1");
    }

    proptest! {
        #[test]
        fn formats_round_trip(rows in 1usize..5, cols in 1usize..5, seed in any::<u64>()) {
            let mut state = seed;
            let m = DMatrix::from_fn(rows, cols, |_, _| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                f64::from_bits((state >> 12) | 0x3ff0_0000_0000_0000) - 1.5
            });
            prop_assert_eq!(&matrix_from_bytes(&matrix_to_bytes(&m).unwrap()).unwrap(), &m);
            prop_assert_eq!(&matrix_from_csv(&matrix_to_csv(&m)).unwrap(), &m);
        }
    }
}
