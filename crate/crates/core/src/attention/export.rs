//! Attention maps as plain data: a `query,key,weight` CSV over the allowed
//! pairs and an 8-bit binary graymap (PGM `P5`) scaled to the largest weight.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::attention::SparsityPattern;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Writes every allowed pair of the valid region with its weight.
pub fn write_attention_csv<T: Scalar>(path: &Path, pattern: &SparsityPattern, weights: &[T]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "query,key,weight")?;
    let mut off = 0;
    for m in 0..pattern.n_queries() {
        for n in pattern.keys(m).iter() {
            writeln!(w, "{m},{n},{}", weights[off].to_f64_lossy())?;
            off += 1;
        }
    }
    w.flush()?;
    Ok(())
}

/// Parses a file written by [`write_attention_csv`].
pub fn read_attention_csv(path: &Path) -> Result<Vec<(usize, usize, f64)>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some("query,key,weight") => {}
        other => return Err(Error::Data(format!("unexpected attention CSV header {other:?}"))),
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::Data(format!("malformed attention CSV line {}: `{line}`", i + 2));
            let mut it = line.split(',');
            let q = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let k = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let w = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            Ok((q, k, w))
        })
        .collect()
}

/// Graymap of the valid region (`valid_queries × valid_len`), 255 at the
/// largest weight.
pub fn attention_pgm<T: Scalar>(pattern: &SparsityPattern, weights: &[T]) -> Vec<u8> {
    let (h, w) = (pattern.valid_queries(), pattern.valid_len());
    let max = weights.iter().fold(0.0f64, |m, v| m.max(v.to_f64_lossy()));
    let mut pixels = vec![0u8; h * w];
    let mut off = 0;
    for m in 0..pattern.n_queries() {
        for n in pattern.keys(m).iter() {
            if max > 0.0 {
                let v = (weights[off].to_f64_lossy() / max * 255.0).round();
                pixels[m * w + n] = v.clamp(0.0, 255.0) as u8;
            }
            off += 1;
        }
    }
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(&pixels);
    out
}

pub fn write_attention_pgm<T: Scalar>(path: &Path, pattern: &SparsityPattern, weights: &[T]) -> Result<()> {
    fs::write(path, attention_pgm(pattern, weights))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_header_and_scaling() {
        let p = SparsityPattern::causal(2);
        let bytes = attention_pgm(&p, &[1.0f64, 0.25, 0.75]);
        let header = b"P5\n2 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[255, 0, 64, 191]);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let p = SparsityPattern::causal(3);
        let w = [1.0f64, 0.5, 0.5, 0.2, 0.3, 0.5];
        write_attention_csv(&path, &p, &w).unwrap();
        let rows = read_attention_csv(&path).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[3], (2, 0, 0.2));
    }
}
